"""Numerical workbench for the Schrodinger-Klein-Gordon system with Yukawa coupling.

Submodules: ``model`` (grids and parameters), ``skg`` (classical flow),
``scatter`` (wave-operator pairings), ``hartree`` (constrained minimization),
``quantum`` (truncated Fock-space model) and ``harness`` (configs and runs).
"""
__version__ = "0.1.0"
