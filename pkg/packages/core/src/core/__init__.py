"""Shared settings, state primitives and the state-set file schema."""
