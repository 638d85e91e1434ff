"""
LaserFlow Core Module
=====================

Fundus heat model, parametric model order reduction, time discretization,
simulation and metrics.
"""

__version__ = "1.0.0"
