import json
import math
import subprocess
import sys

import pytest

from hbarsim import __version__
from hbarsim.cli import (
    COMMANDS,
    DEFAULT_SEED,
    FIGURE1_COLUMNS,
    Context,
    build_document,
    figure1_rows,
    load_config,
    main,
    read_csv_result,
    render,
    resolve_parameters,
    validate_document,
)
from hbarsim.errors import ValidationError
from hbarsim.noise import SI

FAST = ["--n-paths", "2000", "--n-steps", "4"]


def run_json(capsys, *argv):
    assert main(list(argv)) == 0
    return json.loads(capsys.readouterr().out)


def strip_timestamp(text):
    return "\n".join(line for line in text.splitlines() if "timestamp" not in line)


class TestParameters:
    def test_defaults(self):
        p = resolve_parameters("simulate free")
        assert p == {k: v.default for k, v in COMMANDS["simulate free"].items()}

    def test_precedence(self):
        p = resolve_parameters("simulate free", {"tau": 0.5, "t": 3.0}, {"tau": 0.2, "t": None})
        assert p["tau"] == 0.2 and p["t"] == 3.0

    def test_unknown_parameter(self):
        with pytest.raises(ValidationError, match="unknown parameter"):
            resolve_parameters("simulate free", {"omega": 1.0})

    def test_type_errors(self):
        with pytest.raises(ValidationError):
            resolve_parameters("simulate free", {"n_paths": 2.5})
        with pytest.raises(ValidationError):
            resolve_parameters("simulate free", {"tau": "nan"})
        with pytest.raises(ValidationError):
            resolve_parameters("simulate oscillator", {"mode": "other"})

    def test_units_context(self):
        assert Context(0, True).hbar == 1.0 and Context(0, True).c == 1.0
        assert Context(0, False).hbar == SI.hbar and Context(0, False).c == SI.c


class TestConfigFile:
    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"command": "bound sigma", "colour": "red"}))
        with pytest.raises(ValidationError, match="unknown config keys"):
            load_config(path)
        assert main(["bound", "sigma", "--config", str(path)]) == 2

    def test_flags_override_file(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"command": "bound cavity", "parameters": {"Q": 1e14, "dhbar": 0.02}, "seed": 5}))
        doc = run_json(capsys, "bound", "cavity", "--config", str(path), "--Q", "1e15")
        assert doc["meta"]["parameters"]["Q"] == 1e15
        assert doc["meta"]["parameters"]["dhbar"] == 0.02
        assert doc["meta"]["seed"] == 5

    def test_config_for_other_command(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"command": "bound cavity"}))
        assert main(["bound", "sigma", "--config", str(path)]) == 2

    def test_run_command(self, tmp_path):
        out = tmp_path / "res.csv"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(
            json.dumps(
                {
                    "command": "figure1",
                    "parameters": {"n_points": 11, "omega_t_max": 10},
                    "output_path": str(out),
                    "output_format": "csv",
                }
            )
        )
        assert main(["run", str(cfg)]) == 0
        meta, rows = read_csv_result(out.read_text())
        assert meta["command"] == "figure1" and len(rows) == 11

    def test_malformed(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        assert main(["run", str(path)]) == 2


class TestExitCodes:
    def test_validation(self, capsys):
        assert main(["simulate", "free", "--tau", "-1"]) == 2
        assert "non-negative" in capsys.readouterr().err

    def test_numerical(self, capsys):
        assert main(["bound", "cavity", "--dhbar", "5"]) == 3
        assert "never reached" in capsys.readouterr().err

    def test_natural_units_rejected_for_bounds(self):
        assert main(["bound", "sigma", "--natural-units"]) == 2

    def test_bad_env_seed(self, monkeypatch):
        monkeypatch.setenv("HBARSIM_SEED", "abc")
        assert main(["simulate", "free", *FAST]) == 2

    def test_argparse_errors(self):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "nothing"])
        assert exc.value.code == 2


class TestCommands:
    def test_bound_cavity(self, capsys):
        doc = run_json(capsys, "bound", "cavity", "--Q", "1e15", "--omega", "3e15", "--lambda", "1", "--dhbar", "0.01")
        row = doc["rows"][0]
        assert row["tau_max_s"] == pytest.approx(9.1e-33, rel=0.01)
        assert 1e7 < row["lambda_scale_GeV"] < 1e9

    def test_bound_sigma(self, capsys):
        doc = run_json(capsys, "bound", "sigma")
        assert doc["rows"][0]["sigma_max"] == pytest.approx(0.060, abs=0.001)
        assert doc["rows"][0]["count_at_sigma_max"] == pytest.approx(1.0, rel=1e-3)

    def test_bound_interferometer(self, capsys):
        doc = run_json(capsys, "bound", "interferometer")
        row = doc["rows"][0]
        assert 4e-34 / 3 <= row["tau_max_s"] <= 3 * 4e-34
        assert row["omega"] == pytest.approx(2 * math.pi * 1e14)

    def test_free_standard_qm_limit(self, capsys):
        doc = run_json(capsys, "simulate", "free", "--tau", "0", *FAST)
        rows = {r["quantity"]: r for r in doc["rows"]}
        spread = rows["spread_growth"]
        # textbook ballistic growth (delta^2 / 2 m^2) t^2 at t = 10
        assert spread["closed_form"] == pytest.approx(0.5, rel=1e-15)
        assert spread["mc_mean"] == spread["closed_form"] and spread["mc_std_error"] == 0.0
        assert all(r["regime"] == "standard QM limit" for r in doc["rows"])

    def test_noisy_regime_label(self, capsys):
        doc = run_json(capsys, "simulate", "photon", *FAST)
        assert all(r["regime"] == "fluctuating hbar" for r in doc["rows"])

    def test_oscillator_mode_in_meta(self, capsys):
        doc = run_json(capsys, "simulate", "oscillator", "--mode", "paper", "--natural-units", *FAST)
        assert doc["meta"]["mode"] == "paper" and doc["meta"]["units"] == "natural"
        names = [r["quantity"] for r in doc["rows"]]
        assert names[:4] == ["mean_x", "mean_p", "mean_x2", "mean_p2"]

    def test_dash_and_underscore_flags(self, capsys):
        a = run_json(capsys, "simulate", "free", "--p-bar", "2", *FAST)
        b = run_json(capsys, "simulate", "free", "--p_bar", "2", *FAST)
        assert a["meta"]["parameters"]["p_bar"] == b["meta"]["parameters"]["p_bar"] == 2.0

    def test_interference(self, capsys):
        doc = run_json(capsys, "interference", "--n-paths", "20000", "--natural-units")
        row = doc["rows"][0]
        assert row["quantity"] == "central_fringe_intensity"
        assert row["closed_form"] == pytest.approx(0.683939720585721, rel=1e-12)
        assert abs(row["z_score"]) < 4

    def test_sweep(self, capsys):
        doc = run_json(
            capsys, "sweep", "free", "--grid", "tau=0,0.01", "--grid", "t=1,10", "--set", "n_paths=1000", "--natural-units"
        )
        spreads = [r for r in doc["rows"] if r["quantity"] == "spread_growth"]
        assert len(spreads) == 4
        assert [(r["grid_tau"], r["grid_t"]) for r in spreads] == [(0.0, 1.0), (0.0, 10.0), (0.01, 1.0), (0.01, 10.0)]
        assert doc["meta"]["parameters"]["fixed"]["n_paths"] == 1000

    def test_sweep_unknown_key(self):
        assert main(["sweep", "cavity", "--grid", "speed=1,2"]) == 2


class TestDocuments:
    def test_json_round_trip(self, capsys):
        doc = run_json(capsys, "bound", "sigma")
        validate_document(doc)
        assert doc["meta"]["version"] == __version__
        assert doc["meta"]["seed"] == DEFAULT_SEED

    def test_schema_rejects_extra_fields(self):
        doc = build_document("bound sigma", {}, Context(1, False), [{"a": 1.0}], timestamp="x")
        validate_document(doc)
        with pytest.raises(ValidationError):
            validate_document({**doc, "extra": 1})
        bad = {**doc, "meta": {**doc["meta"], "units": "cgs"}}
        with pytest.raises(ValidationError):
            validate_document(bad)

    def test_csv_columns_and_header(self, capsys):
        assert main(["figure1", "--n-points", "3"]) == 0
        text = capsys.readouterr().out
        lines = text.splitlines()
        header = [line for line in lines if line.startswith("# ")]
        assert [h.split(":")[0] for h in header] == ["# version", "# command", "# seed", "# units", "# parameters", "# timestamp"]
        assert lines[len(header)] == ",".join(FIGURE1_COLUMNS)

    def test_csv_floats_round_trip(self):
        rows = [{"x": 0.1 + 0.2, "y": None, "z": "label"}]
        doc = build_document("bound sigma", {}, Context(1, False), rows, timestamp="t")
        _, back = read_csv_result(render(doc, "csv"))
        assert back == [{"x": 0.1 + 0.2, "y": None, "z": "label"}]

    def test_output_file(self, tmp_path):
        out = tmp_path / "r.json"
        assert main(["bound", "sigma", "--output", str(out)]) == 0
        validate_document(json.loads(out.read_text()))


class TestDeterminism:
    @pytest.mark.parametrize(
        "argv",
        [
            ["simulate", "free", *FAST],
            ["simulate", "oscillator", *FAST],
            ["interference", "--n-paths", "5000"],
            ["figure1", "--n-points", "51"],
        ],
    )
    def test_byte_identical(self, capsys, argv):
        outs = []
        for _ in range(2):
            assert main([*argv, "--seed", "99"]) == 0
            outs.append(strip_timestamp(capsys.readouterr().out))
        assert outs[0] == outs[1]

    def test_env_seed(self, capsys, monkeypatch):
        monkeypatch.setenv("HBARSIM_SEED", "1234")
        doc = run_json(capsys, "simulate", "free", *FAST)
        assert doc["meta"]["seed"] == 1234
        assert run_json(capsys, "simulate", "free", "--seed", "7", *FAST)["meta"]["seed"] == 7

    def test_seed_changes_estimate(self, capsys):
        a = run_json(capsys, "simulate", "free", "--seed", "1", *FAST)
        b = run_json(capsys, "simulate", "free", "--seed", "2", *FAST)
        assert a["rows"][1]["mc_mean"] != b["rows"][1]["mc_mean"]


class TestFigure1:
    def test_axis_and_origin(self):
        rows = figure1_rows()
        assert len(rows) == 1501
        assert rows[1]["omega_t"] == pytest.approx(0.1, rel=1e-15)
        assert rows[-1]["omega_t"] == 150.0
        assert rows[0]["mean_x"] == pytest.approx(math.sqrt(2), rel=1e-15)
        assert rows[0]["var_x"] == pytest.approx(0.5, rel=1e-15)

    def test_asymptote(self):
        rows = figure1_rows(omega_t_max=2000.0, n_points=20001)
        assert rows[-1]["var_x"] == pytest.approx(1.5, abs=1e-12)

    def test_invalid(self):
        with pytest.raises(ValidationError):
            figure1_rows(n_points=1)


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "hbarsim", "bound", "sigma", "--format", "csv"],
        capture_output=True,
        text=True,
        check=True,
    )
    meta, rows = read_csv_result(proc.stdout)
    assert meta["command"] == "bound sigma"
    assert rows[0]["sigma_max"] == pytest.approx(0.0605, abs=1e-3)
