"""Sinai random walk in random environment: exact computations, valleys, simulation."""
