import json

import pandas as pd
import pytest

from src.exceptions import InputError
from src.utils.report_manager import ReportManager


@pytest.fixture
def reports(tmp_path):
    return ReportManager(tmp_path, config_hash="0123456789abcdef", master_seed=42)


def test_filenames_are_deterministic(reports):
    assert reports.generate_filename("ode", "nonlocal k=10", "json") == "ode_nonlocal-k-10_0123456789ab.json"
    assert ReportManager(reports.base_dir).generate_filename("verify", "", "txt") == "verify_run_nohash.txt"


def test_json_report_and_sidecar(reports):
    path = reports.save_json("mech", "feller", {"verdict": "PASS"})
    data = json.loads(path.read_text())
    assert data == {"config_hash": "0123456789abcdef", "master_seed": 42, "verdict": "PASS"}
    meta = json.loads(path.with_name("mech_feller_0123456789ab.meta.json").read_text())
    assert meta["config_hash"] == "0123456789abcdef"
    assert "created_at" in meta
    assert "created_at" not in path.read_text()


def test_csv_is_stamped(reports):
    path = reports.save_csv("ode", "pgf", [{"t": 1.0, "prediction": 1 / 3}])
    frame = pd.read_csv(path, float_precision="round_trip")
    assert frame.loc[0, "prediction"] == 1 / 3
    assert frame.loc[0, "config_hash"] == "0123456789abcdef"


def test_text_tables(reports):
    path = reports.save_text("flow", "run", "title", {"rows": [{"a": 1, "b": 2}], "none": []})
    text = path.read_text()
    assert text.startswith("title\nconfig_hash 0123456789abcdef")
    assert "[rows]" in text and "(empty)" in text


def test_register_adds_sidecar_for_external_files(reports):
    target = reports.report_path("ode", "feller_pgf", "csv")
    target.write_text("t,target,prediction,config_hash\n")
    assert reports.register("ode", "feller_pgf", target, {"rows": 0}) == target
    meta = json.loads(target.with_name("ode_feller_pgf_0123456789ab.meta.json").read_text())
    assert meta["rows"] == 0
    assert meta["file_size"] == target.stat().st_size
    assert reports.written == [target]
    with pytest.raises(InputError):
        reports.register("ode", "gone", reports.report_path("ode", "gone", "csv"))


def test_unknown_kind(reports):
    with pytest.raises(InputError):
        reports.directory("plots")
