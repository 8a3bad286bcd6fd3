"""One-way LOCC protocols from witness bases."""
