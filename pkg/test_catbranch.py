#!/usr/bin/env python3
"""
CLI checks: config validation, deterministic artifacts, exit codes and
the SVG renderer.
"""

import json
import sys
from pathlib import Path

import pytest

from catbranch import (ConfigError, RunConfig, artifact_path, load_config, main, parse_config, render_plot, run,
                       serialize_config, to_csv)
from verdicts import Verdict, fold

SMALL = {
    "name": "tiny",
    "model": {"d": 2, "family": "cyclic", "alpha": [0.1, -0.2]},
    "modulus": {"family": "log"},
    "sim": {"dt": 1e-3, "T": 0.05, "n_paths": 3, "seed": 7, "record_stride": 5},
    "experiment": {"C_hat": 0.2, "lipschitz_pairs": 200, "csv_paths": 2},
}


def write_config(tmp_path: Path, **changes) -> Path:
    doc = json.loads(json.dumps(SMALL))
    for block, values in changes.items():
        if isinstance(values, dict):
            doc.setdefault(block, {}).update(values)
        else:
            doc[block] = values
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


# ---------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------


def test_fold_and_exit_codes():
    assert fold([Verdict.PASS, Verdict.INCONCLUSIVE]) is Verdict.INCONCLUSIVE
    assert fold([Verdict.INCONCLUSIVE, Verdict.FAIL, Verdict.PASS]) is Verdict.FAIL
    assert fold([]) is Verdict.INCONCLUSIVE
    assert [v.exit_code for v in Verdict] == [0, 2, 3]


# ---------------------------------------------------------------------
# config
# ---------------------------------------------------------------------


def test_minimal_config_defaults():
    config = parse_config('{"model": {"d": 3}}')
    assert config.name == "fixture"
    assert config.sim.dt == 1e-3 and config.sim.T == 1.0
    assert config.start.tolist() == [1.0, 1.0, 1.0]
    assert config.gap.tolist() == [1e-3, 0.0, 0.0]
    assert config.modulus.build().c0 == 0.1


def test_dt_beyond_T_names_both_fields():
    with pytest.raises(ConfigError) as info:
        parse_config('{"model": {"d": 1}, "sim": {"dt": 0.1, "T": 0.05}}')
    text = str(info.value)
    assert "dt=0.1" in text and "T=0.05" in text


def test_rejects_bad_values():
    with pytest.raises(ConfigError):
        parse_config('{"model": {"d": 2, "gamma": [1.0, -1.0]}}')
    with pytest.raises(ConfigError):
        parse_config('{"model": {"d": 2}, "modulus": {"epsilon": 1.5}}')
    with pytest.raises(ConfigError):
        parse_config('{"model": {"d": 2}, "initial": {"a": [1.0]}}')
    with pytest.raises(ConfigError):
        parse_config('{"model": {"d": 2}, "sim": {"dt": NaN}}')


def test_unknown_key_is_an_error():
    with pytest.raises(ConfigError) as info:
        parse_config('{"model": {"d": 2}, "sim": {"steps": 10}}')
    assert "sim.steps" in str(info.value)


def test_collects_every_error():
    doc = '{"model": {"d": 0}, "sim": {"n_paths": 0, "record_stride": 0}, "bogus": 1}'
    with pytest.raises(ConfigError) as info:
        parse_config(doc)
    assert len(info.value.errors) >= 3


def test_malformed_json():
    with pytest.raises(ConfigError) as info:
        parse_config("{not json")
    assert info.value.errors[0].startswith("malformed JSON")


def test_serialized_config_parses_back(tmp_path):
    config = load_config(write_config(tmp_path))
    again = parse_config(serialize_config(config))
    assert again == config
    assert isinstance(again, RunConfig)


def test_overrides_are_revalidated(tmp_path):
    config = load_config(write_config(tmp_path), seed=99, out=tmp_path / "o", plot=True)
    assert config.sim.seed == 99
    assert config.output.dir == str(tmp_path / "o")
    assert config.output.plot is True
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path), seed=-1)


# ---------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------


def test_csv_uses_lf_and_full_precision():
    text = to_csv(["t", "x"], [[0.1, 1 / 3], [None, True]])
    assert "\r" not in text
    assert text.splitlines()[1] == "0.10000000000000001,0.33333333333333331"
    assert text.splitlines()[2] == ",true"


def test_render_plot_rejects_empty():
    with pytest.raises(ValueError):
        render_plot([], {"y": []})
    with pytest.raises(ValueError):
        render_plot([0.0, 1.0], {})


def test_render_plot_is_deterministic():
    a = render_plot([0.0, 0.5, 1.0], {"y": [1.0, 2.0, 1.5]}, bound=[2.0, 2.5, 3.0], title="t")
    b = render_plot([0.0, 0.5, 1.0], {"y": [1.0, 2.0, 1.5]}, bound=[2.0, 2.5, 3.0], title="t")
    assert a == b
    assert a.startswith("<?xml")


def test_artifact_name():
    assert artifact_path(Path("out"), "gronwall", "cyclic", 3, "csv") == Path("out/gronwall-cyclic-3.csv")


# ---------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------


def test_simulate_is_byte_identical(tmp_path):
    path = write_config(tmp_path)
    out = tmp_path / "res"
    assert run("simulate", path, out=out) == 0
    csv_path = artifact_path(out, "simulate", "tiny", 7, "csv")
    json_path = artifact_path(out, "simulate", "tiny", 7, "json")
    first_csv, first_json = csv_path.read_bytes(), json_path.read_bytes()
    assert run("simulate", path, out=out) == 0
    assert csv_path.read_bytes() == first_csv
    assert json_path.read_bytes() == first_json

    text = first_csv.decode()
    assert text.startswith("path,t,x_1,x_2\n")
    assert "\r" not in text
    assert {line.split(",")[0] for line in text.splitlines()[1:]} == {"0", "1"}

    summary = json.loads(first_json)
    assert summary["verdict"] == "Pass" and summary["exit_code"] == 0
    assert summary["config"]["sim"]["seed"] == 7


def test_seed_override_names_the_artifact(tmp_path):
    out = tmp_path / "res"
    assert run("simulate", write_config(tmp_path), seed=42, out=out) == 0
    assert artifact_path(out, "simulate", "tiny", 42, "csv").exists()
    assert not artifact_path(out, "simulate", "tiny", 7, "csv").exists()


def test_check_conditions_exit_codes(tmp_path):
    out = tmp_path / "res"
    assert run("check-conditions", write_config(tmp_path), out=out) == 0
    failing = write_config(tmp_path, modulus={"family": "power", "p": -0.5})
    assert run("check-conditions", failing, out=out) == 2
    summary = json.loads(artifact_path(out, "check-conditions", "tiny", 7, "json").read_text())
    assert summary["verdict"] == "Fail"
    assert [c["verdict"] for c in summary["result"]["conditions"]][1:] == ["Fail", "Fail"]


def test_bad_config_exits_with_one(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"model": {"d": 2}, "sim": {"dt": 2.0, "T": 1.0}}', encoding="utf-8")
    assert run("simulate", bad, out=tmp_path) == 1
    assert run("simulate", tmp_path / "missing.json", out=tmp_path) == 1
    assert not list(tmp_path.glob("simulate-*"))


def test_couple_with_zero_gap(tmp_path):
    out = tmp_path / "res"
    path = write_config(tmp_path, initial={"a": [1.0, 1.0], "gap": [0.0, 0.0]})
    assert run("couple", path, out=out) == 0
    lines = artifact_path(out, "couple", "tiny", 7, "csv").read_text().splitlines()
    assert lines[0] == "t,x_1,x_2,y_1,y_2,zeta,xi_1,xi_2,eta_1,eta_2"
    rows = [line.split(",") for line in lines[1:]]
    assert all(row[1:3] == row[3:5] for row in rows)
    assert all(float(row[5]) == 0.0 for row in rows)
    assert float(rows[0][1]) == 1.0


def test_couple_columns_carry_both_states(tmp_path):
    out = tmp_path / "res"
    assert run("couple", write_config(tmp_path), out=out) in (0, 2)
    lines = artifact_path(out, "couple", "tiny", 7, "csv").read_text().splitlines()
    header = lines[0].split(",")
    for line in lines[1:]:
        row = dict(zip(header, map(float, line.split(","))))
        xi = [(row[f"x_{i}"] - row[f"y_{i}"]) ** 2 for i in (1, 2)]
        assert row["xi_1"] == pytest.approx(xi[0], abs=1e-15)
        assert row["zeta"] == pytest.approx(sum(xi), abs=1e-15)
    first = dict(zip(header, map(float, lines[1].split(","))))
    assert first["y_1"] - first["x_1"] == pytest.approx(1e-3)


def test_martingale_csv_is_a_time_series(tmp_path):
    out = tmp_path / "res"
    path = write_config(tmp_path, sim={"n_paths": 50})
    assert run("martingale", path, out=out) in (0, 2)
    lines = artifact_path(out, "martingale", "tiny", 7, "csv").read_text().splitlines()
    assert lines[0] == "t,mean_1,mean_2,se_1,se_2"
    first = [float(v) for v in lines[1].split(",")]
    assert first == [0.0, 1.0, 1.0, 0.0, 0.0]
    assert float(lines[-1].split(",")[0]) == pytest.approx(0.05)
    assert len(lines) == 1 + 11


def test_gronwall_with_plot(tmp_path):
    out = tmp_path / "res"
    path = write_config(tmp_path, sim={"n_paths": 20, "T": 0.1})
    assert run("gronwall", path, out=out, plot=True) == 0
    svg = artifact_path(out, "gronwall", "tiny", 7, "svg").read_text()
    assert svg.startswith("<?xml")
    header = artifact_path(out, "gronwall", "tiny", 7, "csv").read_text().splitlines()[0]
    assert header == "t,log_mean_phi,log_se,log_bound"


def test_gap_too_large_for_gronwall_exits_with_one(tmp_path):
    path = write_config(tmp_path, initial={"a": [1.0, 1.0], "gap": [0.5, 0.0]})
    assert run("gronwall", path, out=tmp_path / "res") == 1


def test_main_parses_arguments(tmp_path):
    path = write_config(tmp_path)
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "m"), "--seed", "3"]) == 0
    assert artifact_path(tmp_path / "m", "simulate", "tiny", 3, "json").exists()
    with pytest.raises(SystemExit):
        main(["nope", "--config", str(path)])


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
