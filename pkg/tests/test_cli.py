"""CLI surface: exit codes, file outputs, determinism, schema stability."""

from __future__ import annotations

import json

import numpy as np
import pytest

from couplemc import cli, experiment
from couplemc.experiment import BATCH_CSV_COLUMNS, SWEEP_CSV_COLUMNS

BASE = {
    "model": "ssep",
    "params": {"n": 3},
    "t_final": 800.0,
    "seed": 31337,
    "observables": [{"kind": "site", "x": 0.5}, {"kind": "pair", "x": 0.2, "y": 0.9}],
    "batches": 4,
}


def write_config(tmp_path, name="cfg.json", **overrides):
    doc = {**BASE, **overrides}
    doc.setdefault("output", str(tmp_path / "out"))
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


class TestExitCodes:
    def test_success(self, tmp_path, capsys):
        assert cli.main(["run", str(write_config(tmp_path))]) == 0
        out = capsys.readouterr().out
        assert "wall time" in out

    def test_config_error_unknown_key(self, tmp_path, capsys):
        path = write_config(tmp_path, bogus_key=1)
        assert cli.main(["run", str(path)]) == 2
        assert "bogus_key" in capsys.readouterr().err

    def test_config_error_missing_file(self, tmp_path, capsys):
        assert cli.main(["run", str(tmp_path / "nope.json")]) == 2

    def test_sweep_without_sweep_list(self, tmp_path, capsys):
        assert cli.main(["sweep", str(write_config(tmp_path))]) == 2
        assert "sweep" in capsys.readouterr().err

    def test_oracle_rejects_kmp(self, tmp_path, capsys):
        path = write_config(tmp_path, model="kmp",
                            params={"n": 3},
                            observables=[{"kind": "site", "x": 0.5}])
        assert cli.main(["oracle", str(path)]) == 2

    def test_oracle_rejects_large_n(self, tmp_path):
        path = write_config(tmp_path, params={"n": 13})
        assert cli.main(["oracle", str(path)]) == 2

    def test_runtime_error_exits_3(self, tmp_path, monkeypatch, capsys):
        def boom(config):
            raise RuntimeError("sweep point N=3 failed: injected")
        monkeypatch.setattr(cli, "run_experiment", boom)
        assert cli.main(["run", str(write_config(tmp_path))]) == 3
        assert "injected" in capsys.readouterr().err


class TestRunOutputs:
    def test_report_and_batch_csv_written(self, tmp_path, capsys):
        path = write_config(tmp_path)
        assert cli.main(["run", str(path)]) == 0
        out_dir = tmp_path / "out"
        report = json.loads((out_dir / "report.json").read_text())
        assert report["config"]["seed"] == 31337
        assert report["results"][0]["n"] == 3
        names = [o["name"] for o in report["results"][0]["observables"]]
        assert names == ["site(0.5)", "pair(0.2,0.9)"]
        csv_lines = (out_dir / "batches_r0.csv").read_text().splitlines()
        assert csv_lines[0] == ",".join(BATCH_CSV_COLUMNS)
        # 2 observables x 2 estimators x 4 batches
        assert len(csv_lines) == 1 + 16

    def test_replicas_write_distinct_csvs(self, tmp_path):
        path = write_config(tmp_path, replicas=2)
        assert cli.main(["run", str(path)]) == 0
        out_dir = tmp_path / "out"
        a = (out_dir / "batches_r0.csv").read_text()
        b = (out_dir / "batches_r1.csv").read_text()
        assert a != b
        report = json.loads((out_dir / "report.json").read_text())
        assert [r["replica"] for r in report["results"]] == [0, 1]
        assert report["config"]["replicas"] == 2

    def test_wall_time_not_in_artifacts(self, tmp_path):
        path = write_config(tmp_path)
        cli.main(["run", str(path)])
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert "wall_time" not in report
        assert "wall_time" not in report["results"][0]

    def test_seed_override_changes_results(self, tmp_path):
        path = write_config(tmp_path)
        cli.main(["run", str(path), "--output", str(tmp_path / "a")])
        cli.main(["run", str(path), "--seed", "999",
                  "--output", str(tmp_path / "b")])
        ra = json.loads((tmp_path / "a" / "report.json").read_text())
        rb = json.loads((tmp_path / "b" / "report.json").read_text())
        assert ra["results"][0]["observables"][0]["simple_estimate"] != \
            rb["results"][0]["observables"][0]["simple_estimate"]


class TestDeterminism:
    def test_identical_invocations_byte_identical_outputs(self, tmp_path):
        path = write_config(tmp_path)
        assert cli.main(["run", str(path), "--output", str(tmp_path / "a")]) == 0
        assert cli.main(["run", str(path), "--output", str(tmp_path / "b")]) == 0
        for name in ("report.json", "batches_r0.csv"):
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            # the output directory is echoed in the report; normalize it
            a = a.replace(str(tmp_path / "a").encode(), b"OUT")
            b = b.replace(str(tmp_path / "b").encode(), b"OUT")
            assert a == b


class TestSweep:
    def test_sweep_csv_schema_and_rows(self, tmp_path):
        path = write_config(tmp_path, sweep=[3, 4], t_final=400.0)
        assert cli.main(["sweep", str(path)]) == 0
        lines = (tmp_path / "out" / "sweep.csv").read_text().splitlines()
        assert lines[0] == "model,N,observable,simple_est,simple_se," \
            "coupled_est,coupled_se,e_N,e_N_se,e_var,e_tau,rejection_rate,seed"
        assert lines[0] == ",".join(SWEEP_CSV_COLUMNS)
        assert len(lines) == 1 + 2 * 2  # two points x two observables
        first = lines[1].split(",")
        assert first[0] == "ssep"
        assert first[1] == "3"
        assert first[-1] == "31337"

    def test_sweep_requires_both_estimators(self, tmp_path):
        path = write_config(tmp_path, sweep=[3, 4], estimators="simple")
        assert cli.main(["sweep", str(path)]) == 2

    def test_point_failure_aborts_naming_the_size(self, tmp_path, monkeypatch, capsys):
        def explode(config, n, point_index, replica):
            raise ValueError("boom")
        monkeypatch.setattr(experiment, "run_point", explode)
        path = write_config(tmp_path, sweep=[3, 4])
        assert cli.main(["sweep", str(path)]) == 3
        assert "N=3" in capsys.readouterr().err


class TestEquilibriumRun:
    def test_simple_estimate_matches_reservoir_density(self, tmp_path):
        # rho_0 = 0.4 on both ends; the mid-site mean converges to 0.4
        path = write_config(
            tmp_path, model="ssep",
            params={"n": 5, "alpha": 0.4, "beta": 0.6, "delta": 0.4, "gamma": 0.6},
            t_final=20_000.0, estimators="simple", batches=16,
            observables=[{"kind": "site", "x": 0.5}])
        assert cli.main(["run", str(path)]) == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        obs = report["results"][0]["observables"][0]
        assert abs(obs["simple_estimate"] - 0.4) < 3 * obs["simple_se"]


class TestOracleCommand:
    def test_prints_exact_values(self, tmp_path, capsys):
        path = write_config(tmp_path)
        assert cli.main(["oracle", str(path)]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["model"] == "ssep"
        # frozen oracle regression: site(0.5) maps to 1-based site 1 at n=3
        assert doc["observables"]["site(0.5)"] == pytest.approx(
            0.88687150837988837, rel=1e-12)
        assert doc["observables"]["pair(0.2,0.9)"] == pytest.approx(
            0.52714793750078814, rel=1e-12)


class TestCanonicalJson:
    def test_float_formatting(self):
        text = experiment.dumps_canonical({"x": 0.1, "n": 3, "flag": True,
                                           "none": None, "list": [1.5]})
        assert '"x": 0.10000000000000001' in text
        assert '"n": 3' in text
        assert '"flag": true' in text
        assert '"none": null' in text

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            experiment.dumps_canonical({"x": float("nan")})

    def test_derived_streams_are_independent(self):
        a = experiment.derive_rng(1, 0, 0, 0).random(4)
        b = experiment.derive_rng(1, 0, 0, 1).random(4)
        c = experiment.derive_rng(1, 0, 1, 0).random(4)
        d = experiment.derive_rng(1, 1, 0, 0).random(4)
        streams = [tuple(s) for s in (a, b, c, d)]
        assert len(set(streams)) == 4
        again = experiment.derive_rng(1, 0, 0, 0).random(4)
        assert np.array_equal(a, again)
