"""Riemannian metrics, geodesics and curvature on spaces of closed planar curves."""

__version__ = "0.1.0"
