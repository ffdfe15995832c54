"""Local and nonlocal Swift-Hohenberg equations on Neumann boxes."""

__version__ = "0.1.0"
