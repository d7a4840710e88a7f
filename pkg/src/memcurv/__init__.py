"""Meshfree curvature and bending-rigidity estimation for membrane networks."""

__version__ = "0.1.0"
