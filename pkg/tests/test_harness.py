import json
import time

import numpy as np
import pytest

from exclusim import cli
from exclusim.harness import (
    CSV_HEADER,
    ExperimentConfig,
    Report,
    constants_table,
    emit_reports,
    load_snapshots,
    run_barrier_flux_experiment,
    run_convergence_experiment,
    run_replacement_residual,
    run_simulate_experiment,
    run_stationarity_suite,
    save_snapshots,
    validate_reference_profile,
)
from exclusim.model import BarrierSpec, JumpKernel, LatticeBox
from exclusim.pde import Profile, UnsupportedRegimeError
from exclusim.sampling import replica_rng
from exclusim.simulation import ExclusionModel, init_from_profile, simulate


def small_raw(**over):
    raw = {
        "d": 1,
        "gamma": 3.0,
        "alpha": 1.0,
        "beta": 0.0,
        "n_values": [16, 32],
        "T": 0.02,
        "replicas": 6,
        "seed": 123,
        "half_side": 2,
    }
    raw.update(over)
    return raw


def test_config_defaults_and_echo():
    cfg = ExperimentConfig("convergence", small_raw())
    echo = cfg.echo()
    assert echo["experiment"] == "convergence"
    assert echo["jobs"] == 1
    assert len(echo["test_functions"]) == 3
    assert echo["snapshot_times"][-1] == pytest.approx(0.02)


def test_config_validation_errors():
    with pytest.raises(ValueError):
        ExperimentConfig("convergence", small_raw(gamma=2.0, n_values=[1, 4]))
    with pytest.raises(ValueError):
        ExperimentConfig("convergence", small_raw(alpha=2.0, beta=0.0))  # slow factor above 1
    with pytest.raises(ValueError):
        ExperimentConfig("convergence", small_raw(gamma=1.5))


def test_reference_profile_validation():
    good = Profile.bump(0.5, 0.3)
    validate_reference_profile(good, {"a_h": 0.4, "b_h": 0.9, "L_h": 3.0, "K_h": 1.5, "A_h": 0.5})
    with pytest.raises(ValueError):
        validate_reference_profile(good, {"a_h": 0.6, "b_h": 0.9, "L_h": 3.0, "K_h": 1.5})  # band
    with pytest.raises(ValueError):
        validate_reference_profile(good, {"a_h": 0.4, "b_h": 0.9, "L_h": 0.1, "K_h": 1.5})  # Lipschitz
    with pytest.raises(ValueError):
        validate_reference_profile(good, {"a_h": 0.4, "b_h": 0.9, "L_h": 3.0, "K_h": 0.5})  # constancy
    step = Profile.step(0.3, 0.7)
    with pytest.raises(ValueError):
        validate_reference_profile(step, {"a_h": 0.2, "b_h": 0.8, "L_h": 3.0, "K_h": 1.0})


def test_emit_reports_schema_and_determinism(tmp_path):
    rep = Report("demo")
    rep.add(0, 16, 0.0, "x", 1.25)
    rep.add(-1, 16, 0.5, "x", 1.5, 0.25)
    rep.verdicts["ok"] = True
    t0 = time.time()
    s1 = emit_reports([rep], tmp_path / "a", {"experiment": "demo"}, seed=1, started=t0)
    s2 = emit_reports([rep], tmp_path / "b", {"experiment": "demo"}, seed=1, started=t0)
    a = (tmp_path / "a" / "demo.csv").read_text()
    b = (tmp_path / "b" / "demo.csv").read_text()
    assert a == b
    lines = a.splitlines()
    assert lines[0] == CSV_HEADER == "experiment,replica,n,t,name,value,se"
    assert lines[1] == "demo,0,16,0.0,x,1.25,"
    assert lines[2] == "demo,-1,16,0.5,x,1.5,0.25"
    assert s1["verdicts"]["demo"]["passed"] is True


def test_emit_reports_empty(tmp_path):
    summary = emit_reports([], tmp_path, {"experiment": "none"}, seed=0, started=time.time())
    data = json.loads((tmp_path / "summary.json").read_text())
    assert data["verdicts"] == {}
    assert summary["outputs"] == []


def test_constants_exported():
    cfg = ExperimentConfig("convergence", small_raw(gamma=2.0, n_values=[16]))
    rows = constants_table(cfg)
    assert rows[0]["sigma_squared"] is None
    assert rows[0]["tail_mass"] > 0
    assert {"c_gamma", "kappa_gamma", "theta_n", "r_max"} <= set(rows[0])


def test_snapshot_dump_roundtrip(tmp_path):
    box = LatticeBox(d=1, n=16, half_side=2)
    model = ExclusionModel(JumpKernel(d=1, gamma=3.0, r_max=box.side), BarrierSpec(1.0, 0.0), box)
    cfg = init_from_profile(lambda p: np.full(len(p), 0.5), box, replica_rng(4, 0))
    traj = simulate(cfg, model, T=0.01, snapshot_times=[0.005, 0.01], seed_key=(4, 0))
    path = tmp_path / "snaps.bin"
    save_snapshots(traj, path)
    box2, times, occ = load_snapshots(path)
    assert (box2.d, box2.n, box2.half_side) == (1, 16, 2)
    np.testing.assert_allclose(times, traj.times)
    np.testing.assert_array_equal(occ, traj.occupancies)


def test_convergence_experiment_small():
    cfg = ExperimentConfig("convergence", small_raw(replicas=8))
    rep = run_convergence_experiment(cfg)
    assert rep.passed, rep.verdicts
    names = {r.name for r in rep.rows}
    assert any(name.startswith("delta:") for name in names)
    # refusal path
    bad = ExperimentConfig("convergence", small_raw(beta=1.0))
    with pytest.raises(UnsupportedRegimeError) as exc:
        run_convergence_experiment(bad)
    assert exc.value.code == "unsupported-beta1-gamma-gt2"


def test_flux_experiment_and_refusal():
    cfg = ExperimentConfig("flux", small_raw(beta=2.0, n_values=[32], replicas=6))
    rep = run_barrier_flux_experiment(cfg)
    assert rep.passed, rep.verdicts
    with pytest.raises(UnsupportedRegimeError):
        run_barrier_flux_experiment(ExperimentConfig("flux", small_raw(beta=0.5)))


def test_replacement_requires_reference():
    cfg = ExperimentConfig("replacement", small_raw(beta=0.5))
    with pytest.raises(UnsupportedRegimeError) as exc:
        run_replacement_residual(cfg)
    assert exc.value.code == "missing-reference-profile"


def test_convergence_constant_profile_signed_mean():
    # a constant profile is stationary: signed deviations are pure noise
    cfg = ExperimentConfig(
        "convergence",
        small_raw(profile={"kind": "constant", "value": 0.5}, replicas=10, n_values=[32]),
    )
    rep = run_convergence_experiment(cfg)
    from exclusim.pde import _space_grid

    for tf in cfg.pairs():
        pts, w = _space_grid(tf, 48)
        ref = 0.5 * float(np.sum(w * tf.value(0.0, pts)))
        rows = [r for r in rep.rows if r.name == f"pairing:{tf.name}" and r.t > 0]
        by_t = {}
        for r in rows:
            by_t.setdefault(r.t, []).append(r.value - ref)
        for t, devs in by_t.items():
            devs = np.asarray(devs)
            se = devs.std(ddof=1) / np.sqrt(len(devs))
            assert abs(devs.mean()) <= 4 * se + 0.5 / 32, (tf.name, t)


def test_replacement_boundary_neumann_pair_degenerates():
    # with flat normal slopes both the window term and the drift term vanish
    raw = small_raw(
        beta=2.0,
        n_values=[24],
        replicas=3,
        profile={"kind": "bump", "base": 0.5, "amplitude": 0.3},
        reference_profile={
            "profile": {"kind": "constant", "value": 0.5},
            "a_h": 0.4, "b_h": 0.9, "L_h": 1.0, "K_h": 1.0, "A_h": 0.5,
        },
        epsilons=[0.5],
        test_functions=[{"kind": "neumann", "name": "Gn"}],
    )
    rep = run_replacement_residual(ExperimentConfig("replacement", raw))
    finals = [r.value for r in rep.rows if r.name.startswith("residual:replacement:")]
    assert finals and max(finals) < 1e-14


def test_replacement_boundary_mode_runs():
    raw = small_raw(
        beta=2.0,
        gamma=3.0,
        n_values=[24, 48],
        replicas=4,
        profile={"kind": "bump", "base": 0.5, "amplitude": 0.3},
        reference_profile={
            "profile": {"kind": "constant", "value": 0.5},
            "a_h": 0.4, "b_h": 0.6, "L_h": 1.0, "K_h": 1.0, "A_h": 0.5,
        },
        epsilons=[0.5, 0.25],
        test_functions=[{"kind": "disc", "name": "Gd"}],
    )
    rep = run_replacement_residual(ExperimentConfig("replacement", raw))
    assert rep.info["mode"] == "boundary"
    assert any(r.name.startswith("residual:replacement:right") for r in rep.rows)
    assert any(r.name.startswith("residual:replacement:left") for r in rep.rows)


def test_stationarity_suite_requires_constant():
    with pytest.raises(ValueError):
        run_stationarity_suite(ExperimentConfig("stationarity", small_raw()))
    cfg = ExperimentConfig(
        "stationarity", small_raw(profile={"kind": "constant", "value": 0.4}, replicas=8)
    )
    rep = run_stationarity_suite(cfg)
    assert rep.passed, rep.verdicts


def test_simulate_experiment_rows():
    cfg = ExperimentConfig("simulate", small_raw(n_values=[16], replicas=2))
    rep = run_simulate_experiment(cfg)
    per_replica = [r for r in rep.rows if r.replica >= 0]
    assert per_replica, "simulate must emit per-replica rows"
    assert any(r.name == "counter:attempts" for r in rep.rows)


def test_jobs_parallel_matches_serial():
    base = small_raw(n_values=[16], replicas=5, T=0.01)
    serial = run_simulate_experiment(ExperimentConfig("simulate", dict(base, jobs=1)))
    parallel = run_simulate_experiment(ExperimentConfig("simulate", dict(base, jobs=2)))
    rows_s = [(r.replica, r.n, r.t, r.name, r.value) for r in serial.rows]
    rows_p = [(r.replica, r.n, r.t, r.name, r.value) for r in parallel.rows]
    assert rows_s == rows_p


# --- CLI ----------------------------------------------------------------------


def _write_cfg(tmp_path, raw):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(raw))
    return p


def test_cli_exit_codes(tmp_path, capsys):
    ok_cfg = _write_cfg(tmp_path, small_raw(replicas=4, n_values=[16]))
    code = cli.main(["convergence", "--config", str(ok_cfg), "--out", str(tmp_path / "out")])
    assert code == 0
    assert (tmp_path / "out" / "convergence.csv").exists()
    assert (tmp_path / "out" / "summary.json").exists()

    refuse_cfg = _write_cfg(tmp_path, small_raw(beta=1.0))
    code = cli.main(["convergence", "--config", str(refuse_cfg), "--out", str(tmp_path / "out2")])
    assert code == 2
    err = capsys.readouterr().err
    assert "unsupported-beta1-gamma-gt2" in err

    missing = tmp_path / "nope.json"
    assert cli.main(["convergence", "--config", str(missing), "--out", str(tmp_path)]) == 2


def test_cli_seed_precedence(tmp_path, monkeypatch):
    cfgp = _write_cfg(tmp_path, small_raw(replicas=2, n_values=[16], seed=1))
    monkeypatch.setenv("EXCLUSIM_SEED", "222")
    cli.main(["simulate", "--config", str(cfgp), "--out", str(tmp_path / "o1")])
    assert json.loads((tmp_path / "o1" / "summary.json").read_text())["seed"] == 222
    cli.main(["simulate", "--config", str(cfgp), "--seed", "333", "--out", str(tmp_path / "o2")])
    assert json.loads((tmp_path / "o2" / "summary.json").read_text())["seed"] == 333
    monkeypatch.delenv("EXCLUSIM_SEED")
    cli.main(["simulate", "--config", str(cfgp), "--out", str(tmp_path / "o3")])
    assert json.loads((tmp_path / "o3" / "summary.json").read_text())["seed"] == 1


def test_cli_rerun_byte_identical(tmp_path):
    cfgp = _write_cfg(tmp_path, small_raw(replicas=3, n_values=[16]))
    cli.main(["simulate", "--config", str(cfgp), "--out", str(tmp_path / "r1")])
    cli.main(["simulate", "--config", str(cfgp), "--out", str(tmp_path / "r2")])
    a = (tmp_path / "r1" / "simulate.csv").read_bytes()
    b = (tmp_path / "r2" / "simulate.csv").read_bytes()
    assert a == b


def test_cli_operators_table(tmp_path):
    cfgp = _write_cfg(tmp_path, {"n_values": [50, 100], "d": 1})
    code = cli.main(["operators", "--config", str(cfgp), "--out", str(tmp_path / "ops")])
    assert code == 0
    lines = (tmp_path / "ops" / "operators_table.csv").read_text().splitlines()
    assert lines[0] == "gamma,d,n,operator,error"
    assert len(lines) == 1 + 2 * 2 * 3  # two gammas, two scales, three canonical pairs


def test_cli_snapshot_dump(tmp_path):
    raw = small_raw(replicas=2, n_values=[16])
    raw["dump_snapshots"] = True
    cfgp = _write_cfg(tmp_path, raw)
    code = cli.main(["simulate", "--config", str(cfgp), "--out", str(tmp_path / "dump")])
    assert code == 0
    box, times, occ = load_snapshots(tmp_path / "dump" / "snapshots_n16.bin")
    assert box.n == 16 and occ.shape[0] == len(times)


def test_cli_pde_grid(tmp_path):
    raw = small_raw()
    raw["pde"] = {"lo": -1.0, "hi": 1.0, "points": 11, "times": [0.0, 0.02]}
    cfgp = _write_cfg(tmp_path, raw)
    code = cli.main(["pde", "--config", str(cfgp), "--out", str(tmp_path / "pout")])
    assert code == 0
    lines = (tmp_path / "pout" / "pde_grid.csv").read_text().splitlines()
    assert lines[0] == "t,u1,rho"
    assert len(lines) == 1 + 11 * 2
