"""Deterministic solvers: generating-function ODE, CB cumulant ODE and the
nonlocal cumulant equation on the shared grid.

Submodules are imported directly (``src.cumulant.solvers``); the mechanism
package depends on ``src.cumulant.grid``.
"""
