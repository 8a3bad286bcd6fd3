"""Witness search, infeasibility certificates and trace replay."""
