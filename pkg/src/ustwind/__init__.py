"""Winding statistics of conditioned spanning-tree branches in annuli.

Exact gauged-determinant identities, loop-soup and Wilson-sampler Monte
Carlo, continuum sech-series asymptotics, and the Dyson/Loewner stochastic
process engine, wrapped in a reproducible experiment CLI.
"""

__version__ = "0.1.0"
