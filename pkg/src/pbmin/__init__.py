"""Computation and minimisation of PAC-Bayesian bounds."""
