import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dickeprep.cli import main
from dickeprep.harness import (
    ConfigError,
    build_config,
    csv_text,
    format_value,
    json_text,
    parse_int_list,
    parse_quantity,
    parse_quantity_list,
    read_config_file,
    run_experiment,
    summarize,
    trial_rng,
    worker_count,
)


@pytest.mark.parametrize(
    "text,value",
    [("5e6", 5e6), ("5MHz", 5e6), ("2us", 2e-6), ("2 µs", 2e-6), ("0.5ns", 0.5e-9), ("inf", math.inf), ("50e-6", 50e-6), ("1GHz", 1e9)],
)
def test_parse_quantity(text, value):
    assert parse_quantity(text) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("text", ["", "abc", "5 parsecs", "1e"])
def test_parse_quantity_rejects(text):
    with pytest.raises(ConfigError):
        parse_quantity(text)


def test_parse_lists():
    assert parse_int_list("1..5,9") == (1, 2, 3, 4, 5, 9)
    assert parse_int_list("3") == (3,)
    assert parse_quantity_list("0.5ns, 1ns") == pytest.approx((0.5e-9, 1e-9))
    with pytest.raises(ConfigError):
        parse_int_list("1,x")
    with pytest.raises(ConfigError):
        parse_int_list(",")


def test_config_file_then_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# lab settings\nn = 40\ntphi = 3us   # measured\ntrials=5\n\nm = 1..3\n")
    values = read_config_file(path)
    cfg = build_config("prepare", values, {"trials": "7"})
    assert cfg.n_spins == 40 and cfg.t_phi == pytest.approx(3e-6)
    assert cfg.trials == 7 and cfg.repetitions == (1, 2, 3)
    assert cfg.t1 == math.inf  # experiment default


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        build_config("nope")
    with pytest.raises(ConfigError):
        build_config("prepare", {"colour": "red"})
    with pytest.raises(ConfigError):
        build_config("prepare", {"n": "7"})
    with pytest.raises(ConfigError):
        build_config("prepare", {"n": "lots"})
    with pytest.raises(ConfigError):
        build_config("prepare", {"rounds": "99"})
    bad = tmp_path / "bad.cfg"
    bad.write_text("n 40\n")
    with pytest.raises(ConfigError):
        read_config_file(bad)
    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "missing.cfg")


def test_experiment_defaults():
    assert build_config("prepare").t_phi == math.inf
    assert build_config("fidelity-bound").t_phi == pytest.approx(2e-6)
    jit = build_config("jitter-sweep")
    assert jit.n_rounds == 6 and jit.repetitions == (1, 3, 5)


def test_worker_count(monkeypatch):
    monkeypatch.delenv("DICKEPREP_WORKERS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("DICKEPREP_WORKERS", "3")
    assert worker_count() == 3
    assert worker_count(2) == 2
    monkeypatch.setenv("DICKEPREP_WORKERS", "many")
    with pytest.raises(ConfigError):
        worker_count()


def test_trial_streams_are_independent_of_order():
    a = trial_rng(42, 7).random(5)
    trial_rng(42, 3).random(100)
    np.testing.assert_array_equal(a, trial_rng(42, 7).random(5))
    assert not np.array_equal(a, trial_rng(42, 8).random(5))
    assert not np.array_equal(a, trial_rng(43, 7).random(5))


def test_format_value():
    assert format_value(True) == "1"
    assert format_value(np.int64(3)) == "3"
    assert float(format_value(0.1)) == 0.1
    assert format_value(math.inf) == "inf"


@settings(max_examples=50, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_formatting_roundtrips(x):
    assert float(format_value(x)) == x


def test_summarize():
    s = summarize([1.0, 2.0, 3.0, 4.0])
    assert s["n"] == 4 and s["mean"] == 2.5
    assert s["ci95"] == pytest.approx(1.96 * np.std([1, 2, 3, 4], ddof=1) / 2)
    assert summarize([5.0])["ci95"] == 0.0


def small(kind, **over):
    return build_config(kind, None, {k: str(v) for k, v in over.items()})


def test_outputs_identical_across_worker_counts():
    cfg = small("prepare", n=40, trials=12, seed=5, t1="50us", tphi="2us", m="1,3")
    one, two = run_experiment(cfg, 1), run_experiment(cfg, 2)
    assert csv_text(one) == csv_text(two)
    assert json_text(one) == json_text(two)


def test_aggregates_recomputed_from_csv():
    cfg = small("jitter-sweep", n=60, trials=10, sigma="1ns,5ns", m="1,3", rounds=4)
    res = run_experiment(cfg)
    rows = list(csv.DictReader(io.StringIO(csv_text(res))))
    assert len(rows) == 2 * 2 * 10
    doc = json.loads(json_text(res))
    for key, entry in doc["aggregates"].items():
        parts = dict(p.split("=") for p in key.split(","))
        vals = [float(r["conditional_fidelity"]) for r in rows if r["sigma"] == parts["sigma"] and r["reps"] == parts["reps"]]
        assert entry["conditional_fidelity"]["mean"] == pytest.approx(np.mean(vals), rel=1e-12)
        assert entry["conditional_fidelity"]["ci95"] == pytest.approx(1.96 * np.std(vals, ddof=1) / math.sqrt(len(vals)), rel=1e-9)


def test_rows_sorted_by_sweep_point_then_trial():
    res = run_experiment(small("jitter-sweep", n=20, trials=4, sigma="2ns,1ns", m="3,1", rounds=3))
    keys = [(r["sigma"], r["reps"], r["trial"]) for r in res.rows]
    assert keys == sorted(keys)


def test_json_document_fields():
    doc = json.loads(json_text(run_experiment(small("fidelity-bound", m="1,3"))))
    assert set(doc) == {"experiment", "version", "master_seed", "config", "aggregates"}
    assert doc["experiment"] == "fidelity-bound"
    assert doc["config"]["t1"] == pytest.approx(50e-6)


@pytest.mark.parametrize(
    "kind,over,cols",
    [
        ("dephasing-rates", {"gammas": "5MHz", "k": 3}, ["gamma", "round", "t", "p_dephase", "p_decay"]),
        ("fidelity-bound", {"m": "1,3"}, ["reps", "k", "bound", "worst_round"]),
        ("picode", {"m": "5"}, ["reps", "theta", "fidelity", "fidelity_squared", "p_succ"]),
        ("targeted", {"n": 20, "trials": 3, "target": 2}, ["trial", "target_m", "bits", "decoded_m", "accepted", "fidelity"]),
        ("adiabatic", {"n": 100, "trials": 3}, ["trial", "label", "status", "decoded_m", "accepted", "fidelity"]),
        ("oracle-check", {"ns": "2,4", "trials": 2}, ["n", "trial", "bits_equal", "max_prob_diff", "fidelity_collective", "fidelity_full", "decoded_m"]),
    ],
)
def test_every_experiment_writes_its_columns(kind, over, cols):
    res = run_experiment(small(kind, **over))
    header = csv_text(res).splitlines()[0].split(",")
    assert header == cols
    json.loads(json_text(res))


def test_cli_success_and_outputs(tmp_path):
    code = main(["fidelity-bound", "--m", "1,3,5", "--out-dir", str(tmp_path)])
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "fidelity-bound.csv").open()))
    assert [r["reps"] for r in rows] == ["1", "3", "5"]
    assert float(rows[2]["bound"]) == pytest.approx(0.9751, abs=1e-4)
    assert json.loads((tmp_path / "fidelity-bound.json").read_text())["experiment"] == "fidelity-bound"


def test_cli_rounds_flag_sets_table_depth(tmp_path):
    assert main(["dephasing-rates", "--gammas", "5MHz", "--rounds", "4", "--out-dir", str(tmp_path)]) == 0
    assert len((tmp_path / "dephasing-rates.csv").read_text().splitlines()) == 5


def test_cli_config_errors_exit_2(tmp_path, capsys):
    assert main(["prepare", "--n", "7", "--out-dir", str(tmp_path)]) == 2
    assert main(["prepare", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["no-such-experiment"]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_runtime_failure_exits_1(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    # the output directory cannot be created below a regular file
    assert main(["fidelity-bound", "--out-dir", str(blocker / "sub")]) == 1


def test_module_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "dickeprep", "dephasing-rates", "--rounds", "2", "--out-dir", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "dephasing-rates.csv").exists()


def test_noiseless_batch_rows_match_per_trial_rows():
    from dickeprep.harness import _prepare_trial

    cfg = small("prepare", n=64, trials=40, rounds=5, seed=3)
    batch = run_experiment(cfg).rows
    direct = [row for t in range(cfg.trials) for row in _prepare_trial(cfg, t)]
    assert [r["bits"] for r in batch] == [r["bits"] for r in direct]
    assert [r["decoded_m"] for r in batch] == [r["decoded_m"] for r in direct]
    np.testing.assert_allclose([r["fidelity"] for r in batch], [r["fidelity"] for r in direct], atol=1e-12)
