"""Gibbs measures relative to Brownian motion: simulation and verification.

Subpackages: spectral (grid Schrodinger oracle), model (energies and
discretised measures), kernels (pair interactions), mcmc (samplers and
estimators), cluster (expansion combinatorics on finite surrogates),
experiments (reproducible studies), cli (command-line front end).
"""

__version__ = "0.1.0"
