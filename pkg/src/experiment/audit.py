"""
Statistical audits of simulated replica sets.

Functions
---------

- `moment_audit` -- mean identity and running-sup bounds at one level
- `distribution_tests` -- empirical pgf comparison of two populations
- `stability_audit` -- L1 stability of two solutions on one driving measure
- `increment_audit` -- sup of level increments along a refinement
- `zscore_calibration` -- tail fraction of z-scores among passing cells
"""

import math
from typing import List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from src.exceptions import InputError
from src.experiment.replicas import ReplicaSet
from src.logger import logger
from src.mechanism.offspring import OffspringLaw
from src.schema import Verdict, all_pass


MIN_AUDIT_REPLICAS = 10_000
MOMENT_SE = 4.0
TREND_SE = 2.0
TAIL_Z = 3.0
TAIL_FRACTION = 0.01


def _mean_se(samples: np.ndarray):
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n < 2 or np.all(samples == samples[0]):
        return float(samples[0]) if n else 0.0, 0.0
    return float(np.mean(samples)), float(np.std(samples, ddof=1) / math.sqrt(n))


def _few(replica_set: ReplicaSet, what: str) -> None:
    if replica_set.n_replicas < MIN_AUDIT_REPLICAS:
        logger.warning(f"{what} from {replica_set.n_replicas} replicas (< {MIN_AUDIT_REPLICAS})")


class MomentRow(BaseModel):
    t: float
    mean: float
    std_error: float
    expected_mean: float
    z_score: float
    mean_verdict: Verdict
    sup_mean: float
    sup_std_error: float
    sup_bound: float
    flow_sup_bound: float
    sup_verdict: Verdict


class MomentAudit(BaseModel):
    level: int
    x0: int
    sigma: float
    offspring_mean: float
    killing: float
    replicas: int
    rows: List[MomentRow] = Field(default_factory=list)
    verdict: Verdict = Verdict.PASS

    def records(self) -> List[dict]:
        return [row.model_dump(mode="json") for row in self.rows]


def moment_audit(
    replica_set: ReplicaSet, level: int, t_list: Sequence[float], law: OffspringLaw, sigma: float
) -> MomentAudit:
    """E X_t = X_0 e^{σ(m-1)t} within 4 SE, and E sup_{s<=t} X_s below both
    X_0 e^{σmt} and the tighter X_0 e^{σ(m-1+b)t} with one-sided 4-SE slack
    (m the offspring mean, b = p_0 of the level's law)."""
    _few(replica_set, "Moment audit")
    m, b = law.mean, law.p0
    start = int(replica_set.level_counts(0.0, level)[0])
    rows = []
    for t in t_list:
        counts = replica_set.level_counts(t, level)
        mean, se = _mean_se(counts)
        expected = start * math.exp(sigma * (m - 1.0) * t)
        z = 0.0 if mean == expected else ((mean - expected) / se if se > 0 else math.inf)
        sup_mean, sup_se = _mean_se(replica_set.level_sups(t, level))
        sup_bound = start * math.exp(sigma * m * t)
        flow_bound = start * math.exp(sigma * (m - 1.0 + b) * t)
        sup_ok = sup_mean - MOMENT_SE * sup_se <= min(sup_bound, flow_bound) * (1 + 1e-12)
        rows.append(
            MomentRow(
                t=t,
                mean=mean,
                std_error=se,
                expected_mean=expected,
                z_score=z,
                mean_verdict=Verdict.of(abs(z) <= MOMENT_SE),
                sup_mean=sup_mean,
                sup_std_error=sup_se,
                sup_bound=sup_bound,
                flow_sup_bound=flow_bound,
                sup_verdict=Verdict.of(sup_ok),
            )
        )
    verdict = all_pass([r.mean_verdict for r in rows] + [r.sup_verdict for r in rows])
    if verdict is not Verdict.PASS:
        logger.warning(f"Moment audit failed at level {level}")
    return MomentAudit(
        level=replica_set.level_index(level),
        x0=start,
        sigma=sigma,
        offspring_mean=m,
        killing=b,
        replicas=replica_set.n_replicas,
        rows=rows,
        verdict=verdict,
    )


class PgfRow(BaseModel):
    s: float
    pgf_a: float
    pgf_b: float
    gap: float
    pooled_se: float
    verdict: Verdict


class DistributionReport(BaseModel):
    t: float
    mode: str
    replicas_a: int
    replicas_b: int
    rows: List[PgfRow] = Field(default_factory=list)
    verdict: Verdict = Verdict.PASS

    def records(self) -> List[dict]:
        return [row.model_dump(mode="json") for row in self.rows]


def distribution_tests(
    paths_a: ReplicaSet,
    paths_b: ReplicaSet,
    s_points: Sequence[float],
    t: float,
    level_a: int = -1,
    level_b: int = -1,
    mode: Literal["direct", "square"] = "direct",
) -> DistributionReport:
    """Compare E[s^{X_t}] of two populations at each s; with mode="square"
    population b is compared through its squared pgf (branching property).
    PASS iff every gap is within 4 pooled SE."""
    xa = paths_a.level_counts(t, level_a)
    xb = paths_b.level_counts(t, level_b)
    rows = []
    for s in s_points:
        pa, sa = _mean_se(np.power(float(s), xa))
        pb, sb = _mean_se(np.power(float(s), xb))
        if mode == "square":
            pb, sb = pb * pb, 2.0 * pb * sb
        pooled = math.hypot(sa, sb)
        gap = abs(pa - pb)
        rows.append(
            PgfRow(s=s, pgf_a=pa, pgf_b=pb, gap=gap, pooled_se=pooled, verdict=Verdict.of(gap <= MOMENT_SE * pooled))
        )
    verdict = all_pass(r.verdict for r in rows)
    if verdict is not Verdict.PASS:
        logger.warning(f"Distribution test ({mode}) at t={t} failed: {[round(r.gap, 6) for r in rows]}")
    return DistributionReport(
        t=t, mode=mode, replicas_a=xa.size, replicas_b=xb.size, rows=rows, verdict=verdict
    )


class StabilityRow(BaseModel):
    t: float
    mean_distance: float
    std_error: float
    bound: float
    verdict: Verdict


class StabilityAudit(BaseModel):
    initial_distance: float
    rows: List[StabilityRow] = Field(default_factory=list)
    verdict: Verdict = Verdict.PASS


def stability_audit(replica_set: ReplicaSet, t_list: Sequence[float], law: OffspringLaw, sigma: float) -> StabilityAudit:
    """E|X²_t - X¹_t| <= E|X²_0 - X¹_0| e^{σt(m+1)} for the two outermost
    levels of a flow whose law does not depend on θ."""
    _few(replica_set, "Stability audit")
    initial = replica_set.counts_at(0.0)
    d0 = float(np.mean(np.abs(initial[:, -1] - initial[:, 0])))
    rows = []
    for t in t_list:
        counts = replica_set.counts_at(t)
        mean, se = _mean_se(np.abs(counts[:, -1] - counts[:, 0]))
        bound = d0 * math.exp(sigma * t * (law.mean + 1.0))
        rows.append(
            StabilityRow(
                t=t, mean_distance=mean, std_error=se, bound=bound, verdict=Verdict.of(mean - MOMENT_SE * se <= bound)
            )
        )
    return StabilityAudit(initial_distance=d0, rows=rows, verdict=all_pass(r.verdict for r in rows))


class IncrementAudit(BaseModel):
    t: float
    lower_levels: List[float]
    sup_means: List[float]
    std_errors: List[float]
    nonincreasing: bool
    shrinks: bool
    verdict: Verdict


def increment_audit(replica_set: ReplicaSet, t: float) -> IncrementAudit:
    """E sup_{s<=t}[X_s(q_n) - X_s(q_j)] as q_j increases towards q_n.

    PASS iff the sequence is nonincreasing within 2 SE and its last value is
    below the first.
    """
    gaps = replica_set.increment_sups[:, replica_set.time_index(t), :]
    if gaps.shape[1] < 2:
        raise InputError("increment audit needs at least three levels")
    stats = [_mean_se(gaps[:, j]) for j in range(gaps.shape[1])]
    means = [m for m, _ in stats]
    errors = [se for _, se in stats]
    nonincreasing = all(
        b <= a + TREND_SE * max(ea, eb) for (a, ea), (b, eb) in zip(stats, stats[1:])
    )
    shrinks = means[-1] < means[0]
    return IncrementAudit(
        t=t,
        lower_levels=list(replica_set.levels[:-1]),
        sup_means=means,
        std_errors=errors,
        nonincreasing=nonincreasing,
        shrinks=shrinks,
        verdict=Verdict.of(nonincreasing and shrinks),
    )


class ZScoreCalibration(BaseModel):
    cells: int
    tail_count: int
    tail_fraction: float
    flagged: bool


def zscore_calibration(z_scores: Sequence[float], verdicts: Optional[Sequence[Verdict]] = None) -> ZScoreCalibration:
    """Fraction of |z| > 3 among PASS cells; flagged when it reaches 1%."""
    z = np.asarray(z_scores, dtype=float)
    if verdicts is not None:
        z = z[np.array([Verdict(v) is Verdict.PASS for v in verdicts], dtype=bool)]
    z = z[np.isfinite(z)]
    tail = int(np.sum(np.abs(z) > TAIL_Z))
    fraction = tail / z.size if z.size else 0.0
    flagged = z.size > 0 and fraction >= TAIL_FRACTION
    if flagged:
        logger.warning(f"{tail} of {z.size} passing cells have |z| > {TAIL_Z:g}")
    return ZScoreCalibration(cells=int(z.size), tail_count=tail, tail_fraction=fraction, flagged=flagged)
