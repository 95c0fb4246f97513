"""Two-species competition with selection on a continuous trait.

Submodules:

* ``model``       grids, resource functions, parameters, state, diagnostics
* ``phase_plane`` Lotka-Volterra classification and separatrix
* ``ode_sim``     mutation-free (nonlocal ODE) model
* ``spectral``    principal eigenpair solver
* ``pde_sim``     model with trait diffusion
* ``cli``         configuration-driven runner
"""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.0.0"
