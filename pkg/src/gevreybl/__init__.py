"""Numerical companion for Gevrey-class well-posedness of thermal boundary layers.

Modules: ``grid`` (discretisation), ``dyadic`` (Littlewood-Paley and
para-products), ``spaces`` (weights, phase, norms), ``solver`` (IMEX
integrator), ``auxiliary`` (W, U, lambda, varphi), ``monitor`` (radius ODE and
energy ledger), ``runner``/``cli`` (orchestration), ``checks`` and ``mms``
(verification).
"""

from .grid import ConfigurationError, Field, Grid, GridMismatchError

__version__ = "0.1.0"
__all__ = ["ConfigurationError", "Field", "Grid", "GridMismatchError", "__version__"]
