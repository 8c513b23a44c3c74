import numpy as np
import pandas as pd
import pytest

from src.exceptions import InputError
from src.flow.codec import MAGIC, dumps_path, export_trajectories, loads_path, read_path, verify_path, write_path
from src.schema import Verdict


def test_written_path_reads_back(two_level_path, tmp_path):
    target = write_path(two_level_path, tmp_path / "paths" / "p.txt")
    loaded = read_path(target)
    assert loaded.terminal == two_level_path.terminal
    assert np.array_equal(loaded.times, two_level_path.times)
    assert loaded.seed == two_level_path.seed
    assert loaded.grid == two_level_path.grid
    assert verify_path(loaded).verdict is Verdict.PASS


def test_handmade_path_verifies(two_level_path):
    report = verify_path(two_level_path)
    assert report.verdict is Verdict.PASS
    assert report.events == 2
    assert report.marks_consistent and report.replay_matches


def test_corrupted_terminal_fails(two_level_path):
    text = dumps_path(two_level_path).replace("# terminal 4 11", "# terminal 4 12")
    report = verify_path(loads_path(text))
    assert report.verdict is Verdict.FAIL
    assert not report.replay_matches


def test_inconsistent_marks_fail(two_level_path):
    # the birth at θ = 6 cannot reach level 1
    text = dumps_path(two_level_path).replace("birth 6.0 7.0 3 1 1", "birth 6.0 7.0 3 0 1")
    report = verify_path(loads_path(text))
    assert not report.marks_consistent
    assert report.verdict is Verdict.FAIL


def test_malformed_files(two_level_path, tmp_path):
    with pytest.raises(InputError):
        loads_path("hello\n")
    text = dumps_path(two_level_path)
    with pytest.raises(InputError):
        loads_path(text.replace("# events 2", "# events 3"))
    with pytest.raises(InputError):
        loads_path(text.replace("birth", "split"))
    with pytest.raises(InputError):
        read_path(tmp_path / "missing.txt")
    assert text.startswith(MAGIC)


def test_export_trajectories(two_level_path, tmp_path):
    target = export_trajectories([two_level_path], [0.0, 0.5, 1.0], tmp_path / "traj.csv", k=10)
    frame = pd.read_csv(target)
    assert len(frame) == 6
    last = frame[(frame.t == 1.0) & (frame.level == 1.0)].iloc[0]
    assert last["count"] == 11
    assert last["value"] == pytest.approx(1.1)
