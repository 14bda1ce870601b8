"""Correlation functions of the two-type continuum contact model with one independent component.

Modules: ``model`` (parameters, kernels, initial data), ``spectral`` (Fourier
grids, divided differences, symbols), ``evolution1``/``evolution2`` (first and
second order closed forms, ODE oracles, long-time limits), ``simulator``
(exact Monte Carlo on a torus), ``analysis`` (lemma witnesses, majorants,
simulation-vs-analytics comparison) and ``cli``.
"""
from .model import FirstOrderInit, Kernel, ModelParams, SecondOrderInit, gaussian_params, validate_params
from .spectral import FourierGrid, SplitField, build_symbols, default_grid, expdd, phi1, phi2

__all__ = ["FirstOrderInit", "Kernel", "ModelParams", "SecondOrderInit", "gaussian_params", "validate_params",
           "FourierGrid", "SplitField", "build_symbols", "default_grid", "expdd", "phi1", "phi2"]
__version__ = "0.1.0"
