"""Sparse tableau modeling, power flow and optimal power flow for electric networks."""
__version__ = "0.1.0"
