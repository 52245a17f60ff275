"""Reverse Hoelder inequalities with tails on spaces of homogeneous type.

Submodules: ``homspace`` (spaces, balls, averages, covering, metrization),
``tails`` (tail functionals, maximal operators, sequence transforms),
``gehring`` (reverse Hoelder constants and gain estimates), ``weights``
(weight-class constants), ``fracops`` (spectral fractional operators),
``fracpde`` (nonlocal elliptic solver) and ``cli``.
"""
__version__ = "0.1.0"
