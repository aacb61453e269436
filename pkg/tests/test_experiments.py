"""Benchmark drivers: configs, CSV contracts, determinism, CLI behavior."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from mlsrk import cli
from mlsrk.discretize import make_scheme
from mlsrk.errors import ConfigError
from mlsrk.experiments import (
    COST_CSV_FIELDS,
    CostMseConfig,
    DATA_SEEDS,
    RATE_CSV_FIELDS,
    RateConfig,
    ensure_dataset,
    measure_rates,
    run_cost_mse_experiment,
    run_rate_experiment,
    scheme_beta,
    stable_hash,
)
from mlsrk.models import SdeModel, generate_data, make_preset, save_dataset
from mlsrk.paths import RngStream


def _read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def _small_data_file(tmp_path, name="gbm1d", n_obs=15):
    p = make_preset(name)
    ds = generate_data(p.sde, p.obs, p.theta_star, n_obs, gen_level=4,
                       seed=71)
    path = tmp_path / f"obs_{name}.csv"
    save_dataset(ds, path)
    return path


def test_stable_hash_is_order_insensitive_and_short():
    a = stable_hash({"x": 1, "y": [1, 2]})
    b = stable_hash({"y": [1, 2], "x": 1})
    assert a == b
    assert len(a) == 12
    assert a != stable_hash({"x": 1, "y": [1, 3]})


def test_scheme_beta_caps():
    assert scheme_beta("gbm1d", "heun") == 3
    assert scheme_beta("gbm1d", "rk4") == 4
    assert scheme_beta("gbm1d", "milstein") == 2
    assert scheme_beta("nonlinear2d", "heun") == 2
    assert scheme_beta("nonlinear2d", "rk4") == 2
    assert scheme_beta("gbm3d", "rk4") == 4


def test_rate_config_validation():
    with pytest.raises(ConfigError):
        RateConfig(model="nope")
    with pytest.raises(ConfigError):
        RateConfig(model="gbm1d", schemes=("rk5",))
    with pytest.raises(ConfigError):
        RateConfig(model="gbm3d", schemes=("milstein",))
    with pytest.raises(ConfigError):
        RateConfig(model="gbm1d", levels=(3, 3, 4))
    with pytest.raises(ConfigError):
        RateConfig(model="gbm1d", levels=(3, 4), ref_level=4)


def test_cost_config_validation():
    with pytest.raises(ConfigError):
        CostMseConfig(model="gbm1d", schemes=("em",))
    with pytest.raises(ConfigError):
        CostMseConfig(model="gbm3d", schemes=("milstein",))
    with pytest.raises(ConfigError):
        CostMseConfig(model="gbm1d", eps2_grid=(1e-3, 2e-3))
    with pytest.raises(ConfigError):
        CostMseConfig(model="gbm1d", eps2_grid=(2e-2, 2e-3), eps2_ref=2e-3)
    with pytest.raises(ConfigError):
        CostMseConfig(model="gbm1d", reps=0)
    cfg = CostMseConfig(model="nonlinear2d")
    assert cfg.step == 0.4


def test_ensure_dataset_default_seeds(tmp_path):
    path = _small_data_file(tmp_path)
    loaded = ensure_dataset("gbm1d", path)
    assert loaded.n_obs == 15
    assert loaded.seed == 71
    assert DATA_SEEDS == {"gbm1d": 1001, "gbm3d": 1002, "nonlinear2d": 1003}


def test_measure_rates_error_ordering():
    # coarse-level strong errors should separate the schemes sharply
    p = make_preset("gbm1d")
    schemes = [make_scheme(n) for n in ("em", "heun", "rk4")]
    rows, slopes = measure_rates(p.sde, p.theta_star, schemes,
                                 RngStream(72).child("r"), levels=(4, 5),
                                 ref_level=8, n_samples=500, batch=250)
    for level in (4, 5):
        err = {r["scheme"]: r["strong_err"] for r in rows
               if r["level"] == level}
        assert err["em"] > err["heun"] > err["rk4"]
    by_name = {s["scheme"]: s for s in slopes}
    assert by_name["em"]["strong_slope"] < by_name["rk4"]["strong_slope"]


def test_measure_rates_degenerate_model_gives_nan_slope():
    m = SdeModel(dim=1, drift=lambda t, x: np.zeros_like(x),
                 diffusion=lambda t, x: np.zeros(x.shape + (1,)),
                 diffusion_jacobian=lambda t, x, j: np.zeros(x.shape + (1,)),
                 x0=np.array([1.0]), name="const")
    rows, slopes = measure_rates(m, 0.0, [make_scheme("heun")],
                                 RngStream(73).child("r"), levels=(3, 4),
                                 ref_level=6, n_samples=50, batch=50)
    assert all(r["strong_err"] == 0.0 for r in rows)
    assert np.isnan(slopes[0]["strong_slope"])


def test_run_rate_experiment_csv_contract(tmp_path):
    cfg = RateConfig(model="gbm1d", schemes=("em", "heun"), levels=(3, 4, 5),
                     ref_level=8, n_samples=400, master_seed=74)
    out = tmp_path / "rates.csv"
    run_rate_experiment(cfg, out)
    rows = _read_rows(out)
    assert list(rows[0]) == list(RATE_CSV_FIELDS)
    assert len(rows) == 6
    slope_rows = _read_rows(tmp_path / "rates_slopes.csv")
    assert {r["scheme"] for r in slope_rows} == {"em", "heun"}
    assert all(r["config_hash"] == rows[0]["config_hash"] for r in rows)
    # same config, same bytes
    out2 = tmp_path / "again.csv"
    run_rate_experiment(cfg, out2)
    body = out.read_bytes()
    assert body == out2.read_bytes()


def _tiny_cost_config(**kw):
    base = dict(model="gbm1d", schemes=("heun",), eps2_grid=(5e-2, 2e-2),
                reps=2, n_particles=20, n_burn=10, eps2_ref=5e-3,
                master_seed=75)
    base.update(kw)
    return CostMseConfig(**base)


def test_run_cost_mse_experiment_contract(tmp_path):
    data = _small_data_file(tmp_path)
    out = tmp_path / "cost.csv"
    rows, slopes = run_cost_mse_experiment(_tiny_cost_config(), out,
                                           data_path=data)
    file_rows = _read_rows(out)
    assert list(file_rows[0]) == list(COST_CSV_FIELDS)
    assert len(file_rows) == 2
    assert [float(r["eps2"]) for r in file_rows] == [5e-2, 2e-2]
    assert float(file_rows[1]["cost"]) > float(file_rows[0]["cost"])
    assert all(float(r["mse"]) > 0.0 for r in file_rows)
    assert len(slopes) == 1
    rep_rows = _read_rows(tmp_path / "cost_reps.csv")
    assert len(rep_rows) == 4
    ref = tmp_path / "references" / "reference_gbm1d_heun.json"
    assert ref.exists()
    json.loads(ref.read_text())


def test_cost_mse_reference_is_reused(tmp_path):
    data = _small_data_file(tmp_path)
    out1 = tmp_path / "c1.csv"
    run_cost_mse_experiment(_tiny_cost_config(), out1, data_path=data)
    ref = tmp_path / "references" / "reference_gbm1d_heun.json"
    before = ref.read_bytes()
    stamp = ref.stat().st_mtime_ns
    out2 = tmp_path / "c2.csv"
    run_cost_mse_experiment(_tiny_cost_config(), out2, data_path=data)
    assert ref.read_bytes() == before
    assert ref.stat().st_mtime_ns == stamp


def test_cost_mse_worker_count_does_not_change_results(tmp_path):
    data = _small_data_file(tmp_path)
    outs = {}
    for w in (1, 2):
        path = tmp_path / f"w{w}.csv"
        run_cost_mse_experiment(_tiny_cost_config(), path, data_path=data,
                                workers=w)
        rows = _read_rows(path)
        for r in rows:
            r.pop("wall_s")
        outs[w] = rows
    assert outs[1] == outs[2]


def test_cli_generate_data_roundtrip(tmp_path):
    out = tmp_path / "obs.csv"
    code = cli.main(["generate-data", "--model", "gbm1d", "--out", str(out),
                     "--seed", "5", "--n-obs", "8"])
    assert code == 0
    assert out.exists()
    assert out.with_suffix(".json").exists()
    loaded = ensure_dataset("gbm1d", out)
    assert loaded.n_obs == 8
    assert loaded.seed == 5


def test_cli_rates_runs_and_writes(tmp_path):
    out = tmp_path / "rates.csv"
    code = cli.main(["rates", "--model", "gbm1d", "--schemes", "em,heun",
                     "--levels", "3,4", "--ref-level", "7", "--samples",
                     "200", "--seed", "3", "--out", str(out)])
    assert code == 0
    assert len(_read_rows(out)) == 4


def test_cli_rejects_unknown_model(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["rates", "--model", "gbm9d", "--out",
                  str(tmp_path / "x.csv")])
    assert exc.value.code == 2


def test_cli_reports_config_errors(tmp_path, capsys):
    code = cli.main(["cost-mse", "--model", "gbm1d", "--schemes", "heun",
                     "--eps2", "1e-3,2e-3", "--out", str(tmp_path / "c.csv")])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_cli_config_file_with_flag_override(tmp_path):
    cfg_file = tmp_path / "rates.json"
    cfg_file.write_text(json.dumps({
        "model": "gbm1d", "schemes": ["em"], "levels": [3, 4],
        "ref_level": 7, "n_samples": 100, "master_seed": 11}))
    out = tmp_path / "rates.csv"
    code = cli.main(["rates", "--model", "gbm1d", "--config", str(cfg_file),
                     "--samples", "150", "--out", str(out)])
    assert code == 0
    rows = _read_rows(out)
    assert rows[0]["n"] == "150"


def test_cli_single_run_chain_csv(tmp_path):
    data = _small_data_file(tmp_path)
    out = tmp_path / "chain.csv"
    code = cli.main(["single-run", "--model", "gbm1d", "--scheme", "heun",
                     "--level", "1", "--iters", "12", "--seed", "2",
                     "--particles", "10", "--data", str(data),
                     "--out", str(out)])
    assert code == 0
    rows = _read_rows(out)
    assert list(rows[0]) == ["iteration", "theta", "log_nc", "accepted"]
    assert len(rows) == 13
    assert rows[0]["accepted"] == "0"


def test_cli_ml_run_json(tmp_path):
    data = _small_data_file(tmp_path)
    out = tmp_path / "ml.json"
    code = cli.main(["ml-run", "--model", "gbm1d", "--scheme", "heun",
                     "--eps2", "0.04", "--burn", "2", "--particles", "10",
                     "--seed", "4", "--data", str(data), "--out", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    assert "estimate" in payload
    assert payload["config"]["beta"] == 3
