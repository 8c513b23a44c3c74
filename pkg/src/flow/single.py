import math
from typing import Optional

import numpy as np

from src.config import config
from src.exceptions import InputError, ResourceError
from src.flow.state import FlowPath, FlowState, LevelGrid, SeedSpec
from src.mechanism.offspring import OffspringLaw
from src.schema import EventKind


SINGLE_GRID = LevelGrid(levels=(1.0,))


def default_event_cap() -> int:
    experiment = config.experiment
    return experiment.run.max_events if experiment is not None else 10**8


def simulate_single(
    law: OffspringLaw,
    sigma: float,
    x0: int,
    horizon: float,
    seed: SeedSpec,
    max_events: Optional[int] = None,
) -> FlowPath:
    """Exact event-by-event realization of the continuous-time
    Galton-Watson process with branching rate σ per individual.

    While X > 0 the next branching comes after an Exponential(σX) time and
    replaces one individual by z ~ law children.
    """
    if sigma <= 0 or not math.isfinite(horizon) or horizon <= 0:
        raise InputError(f"need σ > 0 and a finite positive horizon (σ={sigma}, horizon={horizon})")
    if x0 < 0 or int(x0) != x0:
        raise InputError(f"x0 must be a nonnegative integer, got {x0}")
    cap = max_events if max_events is not None else default_event_cap()
    rng = seed.rng()

    times, kinds, zs = [], [], []
    t, x = 0.0, int(x0)
    extinction_time = None
    while x > 0:
        t += rng.exponential(1.0 / (sigma * x))
        if t > horizon:
            break
        z = law.sample(rng)
        times.append(t)
        kinds.append(EventKind.BIRTH.code if z > 0 else EventKind.DEATH.code)
        zs.append(z)
        x += z - 1
        if len(times) > cap:
            raise ResourceError(
                f"replica {seed.replica_index} exceeded {cap} events before t={horizon}",
                replica_index=seed.replica_index,
            )
        if x == 0:
            extinction_time = t

    count = len(times)
    columns = {
        "times": times,
        "kinds": kinds,
        "thetas": np.full(count, np.nan),
        "us": np.full(count, np.nan),
        "zs": zs,
        "j0": np.zeros(count, dtype=np.int64),
        "j1": np.zeros(count, dtype=np.int64),
    }
    return FlowPath.from_columns(
        columns,
        grid=SINGLE_GRID,
        kappa=1.0,
        sigma=sigma,
        level_b=(law.p0,),
        initial=FlowState(time=0.0, counts=(int(x0),)),
        horizon=horizon,
        terminal=(x,),
        extinction_time=extinction_time,
        seed=seed,
        family_id="single",
    )
