"""Pseudospectral simulation and analysis of Boussinesq-type models of flow in viscoelastic vessels.

Modules: ``spectral`` (periodic Fourier fields and norms), ``model`` (parameters,
the operator A and its inverse, right-hand sides), ``evolve`` (RK4 integration,
energies, experiments), ``illposedness`` (growth rates, generator spectra),
``traveling`` (traveling-wave bifurcation and continuation), ``config``,
``results`` and ``cli`` (experiment harness).
"""

__version__ = "0.1.0"
