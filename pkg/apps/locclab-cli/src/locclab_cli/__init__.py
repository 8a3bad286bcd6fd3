"""Command-line front end for the witness / prover / protocol pipeline."""
