"""Bayesian VARs with horseshoe, spike-and-slab, t, Laplace and ridge priors and stochastic volatility."""

__version__ = "0.1.0"
