import json
import os
import subprocess
import sys

import numpy as np
import pytest

from pcp.core import ConfigurationError, save_csv
from pcp.experiment import ExperimentConfig, run_experiment, run_repetition
from pcp.synth import SynthSpec, generate


def smoke_config(tmp_path, **overrides):
    base = dict(
        data={"synth": {"name": "bimodal_multitarget", "n": 400, "seed": 1, "params": {"d": 1}}},
        outdir=str(tmp_path / "run"),
        method="pcp",
        repetitions=2,
        pcp={"alpha": 0.1, "k_samples": 20, "seed": 3},
        wsc={"n_directions": 10},
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        ExperimentConfig(data={"synth": {"name": "circle"}}, outdir="x", method="nope")
    with pytest.raises(ConfigurationError):
        ExperimentConfig(data={"synth": {"name": "circle"}}, outdir="x", repetitions=0)
    with pytest.raises(ConfigurationError):
        ExperimentConfig(data={}, outdir="x")
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"data": {"csv": "f"}, "outdir": "x", "bogus": 1})


def test_run_experiment_outputs(tmp_path):
    cfg = smoke_config(tmp_path)
    reports = run_experiment(cfg)
    assert len(reports) == 2
    out = tmp_path / "run"
    for name in ("config_echo.json", "reports.csv", "aggregate.csv", "test_points.csv"):
        assert (out / name).exists()
    assert any((out / "sets").iterdir())
    header = (out / "reports.csv").read_text().splitlines()[0]
    assert header.startswith("rep,marginal_coverage,conditional_coverage")


def test_rerun_is_byte_identical(tmp_path):
    cfg = smoke_config(tmp_path)
    run_experiment(cfg)
    first = (tmp_path / "run" / "reports.csv").read_bytes()
    run_experiment(cfg)
    second = (tmp_path / "run" / "reports.csv").read_bytes()
    assert first == second


def test_aggregate_matches_reports(tmp_path):
    cfg = smoke_config(tmp_path, repetitions=3)
    run_experiment(cfg)
    rows = (tmp_path / "run" / "reports.csv").read_text().splitlines()[1:]
    cov = np.array([float(r.split(",")[1]) for r in rows])
    agg = dict(
        (line.split(",")[0], (float(line.split(",")[1]), float(line.split(",")[2])))
        for line in (tmp_path / "run" / "aggregate.csv").read_text().splitlines()[1:]
    )
    mean, stderr = agg["marginal_coverage"]
    assert mean == pytest.approx(cov.mean())
    assert stderr == pytest.approx(cov.std(ddof=1) / np.sqrt(len(cov)))


def test_hdpcp_method_records_beta(tmp_path):
    cfg = smoke_config(tmp_path, method="hdpcp")
    run_experiment(cfg)
    rows = (tmp_path / "run" / "reports.csv").read_text().splitlines()
    beta = rows[1].split(",")[-1]
    assert float(beta) in {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7}


def test_naive_methods_run(tmp_path):
    for method in ("naive_interval", "bonferroni_naive"):
        cfg = smoke_config(tmp_path / method, method=method)
        reports = run_experiment(cfg)
        assert 0.7 <= reports[0].marginal_coverage <= 1.0


def test_csv_data_source(tmp_path):
    ds = generate(SynthSpec("circle", 300, seed=0))
    path = tmp_path / "data.csv"
    save_csv(path, ds.x, ds.y)
    cfg = ExperimentConfig(
        data={"csv": str(path)},
        outdir=str(tmp_path / "run"),
        repetitions=1,
        pcp={"alpha": 0.2, "k_samples": 10},
        wsc={"n_directions": 5},
    )
    reports = run_experiment(cfg)
    assert reports[0].n_test > 0


def test_point_mass_backbone_full_coverage(tmp_path, monkeypatch):
    import pcp.experiment as exp

    class Perfect:
        has_density = False
        d = 1

        def sample_many(self, xs, k, rng):
            xs = np.atleast_2d(xs)
            return np.repeat(2.0 * xs[:, :1][:, None, :], k, axis=1), None

    monkeypatch.setattr(exp, "fit_backbone", lambda cfg, ds, seed: Perfect())
    x = np.linspace(-1, 1, 200)[:, None]
    ds = generate(SynthSpec("circle", 200, seed=0))
    from pcp.core import from_arrays

    dataset = from_arrays(x, 2.0 * x[:, 0], seed=0)
    cfg = smoke_config(tmp_path)
    report, _ = exp.run_repetition(cfg, dataset, 0)
    assert report.marginal_coverage == 1.0
    assert report.mean_set_size == 0.0


def run_cli(args):
    return subprocess.run(
        [sys.executable, "-m", "pcp.cli", *args], capture_output=True, text=True
    )


def cli_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(
        json.dumps(
            {
                "data": {"synth": {"name": "s_curve", "n": 300, "seed": 0}},
                "outdir": str(tmp_path / "run"),
                "method": "pcp",
                "repetitions": 1,
                "pcp": {"alpha": 0.2, "k_samples": 10, "seed": 0},
                "wsc": {"n_directions": 5},
            }
        )
    )
    return path


def test_cli_run_and_plot(tmp_path):
    cfg = cli_config(tmp_path)
    r = run_cli(["run", str(cfg)])
    assert r.returncode == 0, r.stderr
    r2 = run_cli(["plot", str(tmp_path / "run")])
    assert r2.returncode == 0, r2.stderr
    plots = os.listdir(tmp_path / "run" / "plots")
    assert "sets_1d.svg" in plots and "interval_histogram.svg" in plots


def test_cli_override_changes_config_echo(tmp_path):
    cfg = cli_config(tmp_path)
    r = run_cli(["run", str(cfg), "--pcp.alpha=0.4"])
    assert r.returncode == 0, r.stderr
    echo = json.loads((tmp_path / "run" / "config_echo.json").read_text())
    assert echo["pcp"]["alpha"] == 0.4


def test_cli_toml_config(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text(
        "\n".join(
            [
                "method = 'pcp'",
                "repetitions = 1",
                f"outdir = '{tmp_path / 'run'}'",
                "[data.synth]",
                "name = 'circle'",
                "n = 300",
                "seed = 0",
                "[pcp]",
                "alpha = 0.2",
                "k_samples = 10",
                "[wsc]",
                "n_directions = 5",
            ]
        )
    )
    r = run_cli(["run", str(path)])
    assert r.returncode == 0, r.stderr


def test_cli_exit_codes(tmp_path):
    assert run_cli(["run", str(tmp_path / "missing.json")]).returncode == 3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"data": {"synth": {"name": "circle"}}, "outdir": "x", "method": "zzz"}))
    assert run_cli(["run", str(bad)]).returncode == 2
    assert run_cli(["plot", str(tmp_path / "nope")]).returncode == 3
    assert run_cli(["bridge-test", sys.executable, "-c", "print('garbage')"]).returncode == 4


def test_cli_gen_roundtrip(tmp_path):
    out = tmp_path / "toy.csv"
    r = run_cli(["gen", "gaussians_8", "--n", "100", "--seed", "5", "--out", str(out)])
    assert r.returncode == 0, r.stderr
    from pcp.core import load_csv

    x, y = load_csv(out)
    assert x.shape == (100, 1) and y.shape == (100, 1)
    ds = generate(SynthSpec("gaussians_8", 100, seed=5))
    assert np.array_equal(x, ds.x) and np.array_equal(y, ds.y)


def test_cli_gen_unknown_family(tmp_path):
    r = run_cli(["gen", "nope", "--out", str(tmp_path / "x.csv")])
    assert r.returncode == 2
