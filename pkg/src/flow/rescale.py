from typing import Callable, List, Sequence, Union

import numpy as np
from scipy import integrate

from src.cumulant.grid import GridFunction
from src.exceptions import InputError
from src.flow.state import FlowPath
from src.schema import Verdict


QUAD_TOL = 1e-10
# relative to 1 + |⟨Y_t, f⟩|
PAIRING_TOL = 1e-6

# f and f' for the by-parts cross-check
PAIRING_FUNCTIONS = {
    "x": (lambda q: np.asarray(q, dtype=float), lambda q: 1.0),
    "exp(-x)": (lambda q: np.exp(-np.asarray(q, dtype=float)), lambda q: -float(np.exp(-q))),
}


TestFunction = Union[Callable[[np.ndarray], np.ndarray], GridFunction, Sequence[float]]


class RescaledView:
    """Y_t(q_i) = X_t(κq_i)/k of a flow simulated with θ-scale κ = k, read as
    the measure with atom Y_t(q_i) - Y_t(q_{i-1}) at each level q_i."""

    def __init__(self, path: FlowPath, k: int):
        if not path.grid.ends_at_one:
            raise InputError("measure views need a level grid ending at q_n = 1")
        if k < 1:
            raise InputError(f"k must be a positive integer, got {k}")
        if k != 1 and abs(path.kappa - k) > 1e-12 * k:
            raise InputError(f"path was simulated with κ = {path.kappa}, cannot rescale by k = {k}")
        self.path = path
        self.k = int(k)
        self.levels = np.asarray(path.grid.levels)

    def values(self, t: float) -> np.ndarray:
        """Y_t(q_i) for every level."""
        return self.path.sample([t])[0] / self.k

    def masses(self, t: float) -> np.ndarray:
        return np.diff(self.values(t), prepend=0.0)

    def total_mass(self, t: float) -> float:
        return float(self.values(t)[-1])

    def at(self, q: float, t: float) -> float:
        """Y_t[0, q]: the staircase at the largest level <= q."""
        idx = int(np.searchsorted(self.levels, q, side="right")) - 1
        return 0.0 if idx < 0 else float(self.values(t)[idx])

    def level_values(self, f: TestFunction) -> np.ndarray:
        if isinstance(f, GridFunction):
            return f.at_points(self.levels)
        if callable(f):
            return np.asarray(f(self.levels), dtype=float) * np.ones_like(self.levels)
        values = np.asarray(f, dtype=float)
        if values.shape != self.levels.shape:
            raise InputError(f"need one value per level, got {values.shape}")
        return values

    def pairing(self, f: TestFunction, t: float) -> float:
        """⟨Y_t, f⟩ = Σ_i f(q_i) (Y_t(q_i) - Y_t(q_{i-1}))"""
        return float(np.dot(self.level_values(f), self.masses(t)))

    def pair_by_parts(self, f: Callable[[float], float], f_prime: Callable[[float], float], t: float) -> float:
        """f(1) Y_t(1) - ∫_0^1 f'(q) Y_t[0, q] dq by quadrature."""
        integral, _ = integrate.quad(
            lambda q: f_prime(q) * self.at(q, t),
            0.0,
            1.0,
            points=self.levels[:-1].tolist() or None,
            limit=200,
            epsabs=QUAD_TOL,
            epsrel=QUAD_TOL,
        )
        return float(f(1.0) * self.total_mass(t) - integral)


def rescale(path: FlowPath, k: int) -> RescaledView:
    return RescaledView(path, k)


def pairing_check(path: FlowPath, k: int, times: Sequence[float], tol: float = PAIRING_TOL) -> List[dict]:
    """⟨Y_t, f⟩ from the level masses against the by-parts form, for f(x) = x and e^{-x}."""
    view = rescale(path, k)
    rows = []
    for t in times:
        for name, (f, f_prime) in PAIRING_FUNCTIONS.items():
            direct = view.pairing(f, t)
            by_parts = view.pair_by_parts(f, f_prime, t)
            gap = abs(direct - by_parts)
            rows.append(
                {
                    "t": float(t),
                    "f": name,
                    "pairing": direct,
                    "by_parts": by_parts,
                    "gap": gap,
                    "pass": Verdict.of(gap <= tol * (1.0 + abs(direct))).value,
                }
            )
    return rows


def pair_counts(counts: np.ndarray, level_values: np.ndarray, k: int) -> np.ndarray:
    """⟨Y, f⟩ for staircases stacked along the last axis."""
    counts = np.asarray(counts, dtype=float)
    masses = np.diff(counts, axis=-1, prepend=0.0) / k
    return masses @ level_values
