import csv
import json

import numpy as np
import pytest

from hetsr.cli import PLOT_COLUMNS, ConfigError, emit_plot_data, main, parse_config
from hetsr.evaluation import PrecisionRecord, run_sweep, sweep_curves, sweep_points
from hetsr.fisher import FisherCurve, fisher_thermal_analytic
from hetsr.traces import GridSpec


def _read(path):
    return list(csv.DictReader(open(path)))


def _run(tmp_path, capsys, *args):
    code = main(list(args))
    return code, capsys.readouterr().err


def test_crb_matches_analytic(tmp_path, capsys):
    out = tmp_path / "crb"
    code, _ = _run(tmp_path, capsys, "crb", "--out", str(out), "--set", "crb.epsilons=[0.1, 0.5, 1.0, 2.0]",
                   "--set", "crb.n_bar=10")
    assert code == 0
    rows = _read(out / "fisher_curve.csv")
    assert [float(r["value"]) for r in rows] == [fisher_thermal_analytic(e, 10.0) for e in (0.1, 0.5, 1.0, 2.0)]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["crb"]["n_bar"] == 10 and "fisher_curve.csv" in manifest["artifacts"]


def test_empty_epsilon_list_is_rejected(tmp_path, capsys):
    out = tmp_path / "sweep"
    code, err = _run(tmp_path, capsys, "sweep", "--out", str(out), "--set", "sweep.epsilons=[]")
    assert code == 2
    record = json.loads(err)
    assert record["path"] == "sweep.epsilons"
    assert not out.exists()


@pytest.mark.parametrize("override,path", [
    ("source.bogus=1", "source.bogus"),
    ("extra=1", "extra"),
    ("source.n_bar=-1", "source.n_bar"),
    ("grid.t_max=-10", "grid"),
    ("search.coarse_points=2", "search.coarse_points"),
])
def test_invalid_configs_report_field_path(tmp_path, capsys, override, path):
    code, err = _run(tmp_path, capsys, "estimate", "--out", str(tmp_path / "o"), "--set", override)
    assert code == 2
    rec = json.loads(err)
    assert rec["error"] == "config" and rec["path"] == path


def test_unreadable_config(tmp_path, capsys):
    code, err = _run(tmp_path, capsys, "crb", "--config", str(tmp_path / "missing.json"))
    assert code == 2 and json.loads(err)["error"] == "config"
    (tmp_path / "bad.json").write_text("{not json")
    code, err = _run(tmp_path, capsys, "crb", "--config", str(tmp_path / "bad.json"))
    assert code == 2


def test_runtime_failure_has_provenance(tmp_path, capsys):
    out = tmp_path / "est"
    code, err = _run(tmp_path, capsys, "estimate", "--out", str(out), "--set", 'estimate.input="nope.hsr"')
    assert code == 1
    rec = json.loads(err)
    assert rec["error"] == "FileNotFoundError" and rec["module"] == "traces"
    assert json.loads((out / "error.json").read_text()) == rec


def test_simulate_then_estimate(tmp_path, capsys):
    sim = tmp_path / "sim"
    code, _ = _run(tmp_path, capsys, "simulate", "--out", str(sim), "--seed", "4",
                   "--set", "simulate.n_signal=1000", "--set", "source.n_bar=30")
    assert code == 0 and (sim / "traces.hsr").exists()
    est = tmp_path / "est"
    code, _ = _run(tmp_path, capsys, "estimate", "--out", str(est), "--set", f'estimate.input="{sim / "traces.hsr"}"',
                   "--set", "estimate.bootstraps=20")
    assert code == 0
    result = json.loads((est / "estimate.json").read_text())
    assert result["report"]["n_signal"] == 1000 and result["bootstrap"]["bootstrap_count"] == 20
    simulated = json.loads((sim / "estimate.json").read_text())
    # complex64 storage perturbs projections only at float32 precision
    assert result["report"]["epsilon_hat"] == pytest.approx(simulated["epsilon_hat"], rel=1e-5)


def test_sweep_rerun_from_manifest_is_identical(tmp_path, capsys):
    a = tmp_path / "a"
    args = ["--set", "sweep.epsilons=[0.3, 0.6]", "--set", "sweep.snrs=[50, 5]",
            "--set", "sweep.n_signal=400", "--set", "sweep.bootstraps=20"]
    assert _run(tmp_path, capsys, "sweep", "--out", str(a), "--seed", "7", *args)[0] == 0
    b = tmp_path / "b"
    assert _run(tmp_path, capsys, "sweep", "--config", str(a / "manifest.json"), "--out", str(b))[0] == 0
    for name in ("records.csv", "plot_data.csv", "panel_S5.csv", "panel_S50.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rows = _read(a / "plot_data.csv")
    assert [float(r["panel"]) for r in rows] == [5.0, 5.0, 50.0, 50.0]
    ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
    assert ma["artifacts"] == mb["artifacts"] and ma["seeds"] == {"seed": 7}


def test_manifest_round_trips_config():
    cfg = parse_config({"mode": "sweep", "seed": 3, "sweep": {"epsilons": [0.2]}})
    again = parse_config(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()
    with pytest.raises(ConfigError):
        parse_config({"seed": 1})


def _record(panel, eps, **kw):
    base = dict(epsilon_true=eps, epsilon_hat_mean=eps + 0.01, bias=0.01, variance_of_estimator=1e-4,
                precision=0.02, precision_err=0.001, snr_hat=panel, bootstrap_count=10,
                n_bar_nominal=panel)
    base.update(kw)
    return PrecisionRecord(**base)


def _curves(panel, eps):
    return (FisherCurve(eps, [0.03] * len(eps), "heterodyne_thermal", panel),
            FisherCurve(eps, [0.01] * len(eps), "direct_sensing"))


def test_emit_plot_data_single_point(tmp_path):
    written = emit_plot_data([_record(50.0, 0.3)], {50.0: _curves(50.0, [0.3])}, tmp_path / "p.csv")
    assert [w.name for w in written] == ["p.csv", "panel_S50.csv"]
    rows = _read(tmp_path / "p.csv")
    assert list(rows[0]) == PLOT_COLUMNS and len(rows) == 1
    assert all(v != "" for v in rows[0].values())
    assert float(rows[0]["bias"]) == 0.01


def test_emit_plot_data_panels_ascending(tmp_path):
    snrs = [200.0, 5.0, 50.0, 10.0, 100.0, 20.0]
    recs = [_record(s, e) for s in snrs for e in (0.2, 0.1)]
    emit_plot_data(recs, {s: _curves(s, [0.1, 0.2]) for s in snrs}, tmp_path / "p.csv")
    panels = [float(r["panel"]) for r in _read(tmp_path / "p.csv")]
    assert panels == sorted(panels) and len(set(panels)) == 6
    assert len(list(tmp_path.glob("panel_S*.csv"))) == 6


def test_emit_plot_data_rejects_mismatched_grid(tmp_path):
    with pytest.raises(ValueError):
        emit_plot_data([_record(50.0, 0.3)], {50.0: _curves(50.0, [0.4])}, tmp_path / "p.csv")
    with pytest.raises(ValueError):
        emit_plot_data([_record(50.0, 0.3)], {}, tmp_path / "p.csv")


def test_bias_passes_through(tmp_path):
    recs = run_sweep(sweep_points([0.4], [20.0], n_signal=300, seed=1), GridSpec(), n_boot=20)
    emit_plot_data(recs, sweep_curves(recs), tmp_path / "p.csv")
    assert float(_read(tmp_path / "p.csv")[0]["bias"]) == recs[0].bias == recs[0].epsilon_hat_mean - 0.4
