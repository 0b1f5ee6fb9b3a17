"""Multirate (local time stepping) DG solvers for diffusion-advection-reaction problems."""

__version__ = "0.1.0"
