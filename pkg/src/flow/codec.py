"""Line-oriented path files.

    # branchflow-path v1
    # <key> <values...>        header lines
    t kind theta u z j0 j1     column line, then one record per event
"""

import math
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from src.exceptions import InputError
from src.flow.coupled import affected_range
from src.flow.state import FlowPath, FlowState, LevelGrid, SeedSpec
from src.logger import logger
from src.schema import EventKind, Verdict


FORMAT_VERSION = 1
MAGIC = f"# branchflow-path v{FORMAT_VERSION}"
COLUMNS = "t kind theta u z j0 j1"


def _fmt(value: float) -> str:
    return repr(float(value))


def dumps_path(path: FlowPath) -> str:
    seed = path.seed
    header = [
        MAGIC,
        f"# family {path.family_id}",
        "# levels " + " ".join(_fmt(q) for q in path.grid.levels),
        f"# kappa {_fmt(path.kappa)}",
        f"# sigma {_fmt(path.sigma)}",
        "# level_b " + " ".join(_fmt(b) for b in path.level_b),
        f"# horizon {_fmt(path.horizon)}",
        "# seed " + (f"{seed.master_seed} {seed.replica_index} {seed.stream}" if seed else "none"),
        "# initial " + " ".join(str(c) for c in path.initial.counts),
        "# terminal " + " ".join(str(c) for c in path.terminal),
        f"# no_ops {path.no_ops}",
        "# extinction " + ("none" if path.extinction_time is None else _fmt(path.extinction_time)),
        f"# events {path.n_events}",
        COLUMNS,
    ]
    lines = header
    for event in path.events():
        lines.append(
            f"{_fmt(event.time)} {event.kind.value} {_fmt(event.theta)} {_fmt(event.u)} "
            f"{event.z} {event.j0} {event.j1}"
        )
    return "\n".join(lines) + "\n"


def write_path(path: FlowPath, file_path: Union[str, Path]) -> Path:
    target = Path(file_path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(dumps_path(path), encoding="utf-8")
    return target


def loads_path(text: str) -> FlowPath:
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise InputError(f"not a path file (expected '{MAGIC}')")
    header: Dict[str, List[str]] = {}
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        if line.startswith("# "):
            key, *values = line[2:].split()
            header[key] = values
        elif line.strip() == COLUMNS:
            body_start = i + 1
            break
        else:
            raise InputError(f"unexpected header line {i + 1}: {line!r}")
    if body_start is None:
        raise InputError("path file has no column line")

    try:
        columns = {name: [] for name in ("times", "kinds", "thetas", "us", "zs", "j0", "j1")}
        for number, line in enumerate(lines[body_start:], start=body_start + 1):
            if not line.strip():
                continue
            t, kind, theta, u, z, j0, j1 = line.split()
            columns["times"].append(float(t))
            columns["kinds"].append(EventKind(kind).code)
            columns["thetas"].append(float(theta))
            columns["us"].append(float(u))
            columns["zs"].append(int(z))
            columns["j0"].append(int(j0))
            columns["j1"].append(int(j1))
        if len(columns["times"]) != int(header["events"][0]):
            raise InputError(f"header announces {header['events'][0]} events, found {len(columns['times'])}")
        seed_fields = header["seed"]
        seed = None
        if seed_fields != ["none"]:
            seed = SeedSpec(
                master_seed=int(seed_fields[0]), replica_index=int(seed_fields[1]), stream=int(seed_fields[2])
            )
        extinction = header["extinction"][0]
        return FlowPath.from_columns(
            columns,
            grid=LevelGrid(levels=tuple(float(q) for q in header["levels"])),
            kappa=float(header["kappa"][0]),
            sigma=float(header["sigma"][0]),
            level_b=tuple(float(b) for b in header["level_b"]),
            initial=FlowState(time=0.0, counts=tuple(int(c) for c in header["initial"])),
            horizon=float(header["horizon"][0]),
            terminal=tuple(int(c) for c in header["terminal"]),
            no_ops=int(header["no_ops"][0]),
            extinction_time=None if extinction == "none" else float(extinction),
            seed=seed,
            family_id=header["family"][0],
        )
    except InputError:
        raise
    except (KeyError, IndexError, ValueError, ValidationError) as e:
        raise InputError(f"malformed path file: {e}")


def read_path(file_path: Union[str, Path]) -> FlowPath:
    source = Path(file_path)
    if not source.exists():
        raise InputError(f"path file not found: {source}")
    return loads_path(source.read_text(encoding="utf-8"))


class PathVerification(BaseModel):
    """Outcome of replaying a path file."""

    source: str = ""
    events: int = 0
    ordered: bool = True
    marks_consistent: bool = True
    monotone: bool = True
    nonnegative: bool = True
    replay_matches: bool = True
    problems: List[str] = Field(default_factory=list)
    verdict: Verdict = Verdict.PASS


def verify_path(path: FlowPath, source: str = "") -> PathVerification:
    """Replay every event and check ordering, marks, level order and the
    recorded terminal state."""
    report = PathVerification(source=source, events=path.n_events)
    problems = report.problems
    times = path.times
    if times.size and (np.any(np.diff(times) <= 0) or times[0] <= 0 or times[-1] > path.horizon):
        report.ordered = False
        problems.append("event times are not strictly increasing inside (0, horizon]")

    counts = list(path.initial.counts)
    level_thetas = path.level_thetas.tolist()
    for index, event in enumerate(path.events()):
        if not (math.isnan(event.theta) or math.isnan(event.u)):
            hit = affected_range(event.kind, event.theta, event.u, counts, level_thetas, path.level_b)
            if hit != (event.j0, event.j1):
                if report.marks_consistent:
                    problems.append(f"event {index}: marks give range {hit}, file has ({event.j0}, {event.j1})")
                report.marks_consistent = False
        if not 0 <= event.j0 <= event.j1 < len(counts):
            report.marks_consistent = False
            problems.append(f"event {index}: range ({event.j0}, {event.j1}) outside the grid")
            break
        for j in range(event.j0, event.j1 + 1):
            counts[j] += event.increment
        if any(c < 0 for c in counts) and report.nonnegative:
            report.nonnegative = False
            problems.append(f"event {index}: negative count {counts}")
        if any(b < a for a, b in zip(counts, counts[1:])) and report.monotone:
            report.monotone = False
            problems.append(f"event {index} at t={event.time:.6g}: level order broken {counts}")

    if tuple(counts) != tuple(path.terminal):
        report.replay_matches = False
        problems.append(f"replay ends at {tuple(counts)}, file records {tuple(path.terminal)}")
    ok = report.ordered and report.marks_consistent and report.monotone and report.nonnegative and report.replay_matches
    report.verdict = Verdict.of(ok)
    if not ok:
        logger.warning(f"Path {source or path.family_id} failed verification: {problems[0]}")
    return report


def export_trajectories(paths: Sequence[FlowPath], times: Sequence[float], file_path: Union[str, Path], k: int = 1) -> Path:
    """CSV of (replica, t, level, count, value = count/k) at the given times."""
    rows = []
    for replica, path in enumerate(paths):
        index = path.seed.replica_index if path.seed else replica
        sampled = path.sample(times)
        for t, counts in zip(times, sampled):
            for level, count in zip(path.grid.levels, counts):
                rows.append({"replica": index, "t": t, "level": level, "count": int(count), "value": count / k})
    frame = pd.DataFrame(rows, columns=["replica", "t", "level", "count", "value"])
    target = Path(file_path)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(target, index=False)
    return target
