"""Experiment orchestration: replicated simulations against PDE references,
operator ladders, residual studies, and report emission.

Experiments are driven by a JSON config (all defaults are resolved and
echoed into the summary).  Every report row carries replica and n
provenance; aggregate rows carry a standard error.  Parameter points with
no limiting equation are refused with a machine-checkable code before any
work is done.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .model import BarrierSpec, JumpKernel, LatticeBox, ModelConstants, in_region_R0
from .observables import (
    generator_hook,
    inbox_difference_weights,
    pairing_hook,
    relative_entropy_product,
    spatial_values,
    window_indicator_weights,
)
from .operators import l1_convergence_error, one_sided_lambda
from .pde import (
    AnalyticSolution,
    Equation,
    Profile,
    UnsupportedRegimeError,
    select_hydrodynamic_pde,
    solution_for,
    weak_residual_dif,
    weak_residual_neu,
)
from .sampling import replica_rng
from .simulation import ExclusionModel, HookSpec, Trajectory, init_from_profile, simulate
from .testfunctions import (
    TestFunctionPair,
    TimePoly,
    discontinuous_pair,
    neumann_pair,
    smooth_pair,
)

__all__ = [
    "ExperimentConfig",
    "Report",
    "ReportRow",
    "run_simulate_experiment",
    "run_convergence_experiment",
    "run_barrier_flux_experiment",
    "run_operator_convergence",
    "run_replacement_residual",
    "run_martingale_suite",
    "run_stationarity_suite",
    "run_pde_report",
    "emit_reports",
    "save_snapshots",
    "CSV_HEADER",
]

CSV_HEADER = "experiment,replica,n,t,name,value,se"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_DEFAULTS = {
    "d": 1,
    "gamma": 3.0,
    "alpha": 1.0,
    "beta": 0.0,
    "n_values": [32, 64, 128],
    "T": 0.1,
    "snapshot_times": None,  # default: 5 equispaced times ending at T
    "profile": {"kind": "step", "left": 1.0, "right": 0.0},
    "reference_profile": None,
    "entropy_bound": False,
    "test_functions": None,  # default roster per experiment
    "replicas": 30,
    "seed": 20260810,
    "half_side": 4,
    "jobs": 1,
    "flux_window": 1.0,
    "epsilons": [0.4, 0.2, 0.1],
    "operator_cases": None,
    "thresholds": {"final_delta": 0.05, "residual_tol": 1e-3, "bias_constant": "auto"},
    "pde": None,
}


def _profile_from_dict(spec: dict) -> Profile:
    kind = spec.get("kind")
    if kind == "constant":
        return Profile.constant(spec["value"])
    if kind == "step":
        return Profile.step(spec.get("left", 1.0), spec.get("right", 0.0))
    if kind == "bump":
        return Profile.bump(
            spec.get("base", 0.5),
            spec.get("amplitude", 0.3),
            spec.get("center", 0.0),
            spec.get("width", 1.0),
        )
    raise ValueError(f"unknown profile kind {kind!r} (config profiles: constant, step, bump)")


def _pair_from_dict(spec: dict, d: int) -> TestFunctionPair:
    kind = spec.get("kind", "smooth")
    time = TimePoly(tuple(spec.get("time", (1.0,))))
    name = spec.get("name", "")
    if kind == "smooth":
        return smooth_pair(
            centers=spec.get("centers"),
            widths=spec.get("widths"),
            d=d,
            time=time,
            scale=spec.get("scale", 1.0),
            name=name,
        )
    if kind == "neumann":
        return neumann_pair(
            d=d,
            minus_scale=spec.get("minus_scale", 1.0),
            plus_scale=spec.get("plus_scale", 0.5),
            minus_width=spec.get("minus_width", 1.0),
            plus_width=spec.get("plus_width", 0.75),
            time=time,
            name=name,
        )
    if kind == "disc":
        return discontinuous_pair(
            d=d,
            minus_center=spec.get("minus_center", -0.4),
            plus_center=spec.get("plus_center", 0.3),
            minus_scale=spec.get("minus_scale", 1.0),
            plus_scale=spec.get("plus_scale", -0.7),
            time=time,
            name=name,
        )
    raise ValueError(f"unknown test-function kind {kind!r}")


def default_smooth_roster(d: int) -> list[dict]:
    """Three canonical smooth bumps: centered, off-center, wide."""
    return [
        {"kind": "smooth", "centers": [0.0] * d, "widths": [1.0] * d, "name": "bump-center"},
        {"kind": "smooth", "centers": [0.0] * (d - 1) + [0.35], "widths": [1.0] * d, "name": "bump-offset"},
        {"kind": "smooth", "centers": [0.0] * d, "widths": [0.8] * (d - 1) + [1.6], "name": "bump-wide"},
    ]


@dataclass
class ExperimentConfig:
    """Validated, fully resolved experiment parameters."""

    experiment: str
    raw: dict = field(repr=False)

    def __post_init__(self):
        merged = dict(_DEFAULTS)
        thresholds = dict(_DEFAULTS["thresholds"])
        user = dict(self.raw)
        thresholds.update(user.pop("thresholds", {}) or {})
        merged.update(user)
        merged["thresholds"] = thresholds
        self.params = merged
        self._validate()

    def _validate(self):
        p = self.params
        if p["d"] < 1 or p["gamma"] < 2.0 or p["alpha"] <= 0 or p["beta"] < 0:
            raise ValueError("require d >= 1, gamma >= 2, alpha > 0, beta >= 0")
        if p["gamma"] == 2.0 and any(n < 2 for n in p["n_values"]):
            raise ValueError("gamma = 2 requires every n >= 2 (the log-corrected clock is singular at n = 1)")
        for n in p["n_values"]:
            if p["alpha"] * float(n) ** (-p["beta"]) > 1.0 + 1e-12:
                raise ValueError(
                    f"alpha * n^-beta > 1 at n={n}; the thinning construction requires it within [0, 1]"
                )
        self.profile = _profile_from_dict(p["profile"])
        self.reference = (
            _profile_from_dict(p["reference_profile"]["profile"])
            if p["reference_profile"]
            else None
        )
        if self.reference is not None:
            validate_reference_profile(self.reference, p["reference_profile"])
        if p["snapshot_times"] is None:
            p["snapshot_times"] = list(np.linspace(0.0, p["T"], 5)[1:])
        if p["test_functions"] is None:
            p["test_functions"] = default_smooth_roster(p["d"])
        # normalize names so report rows and the echoed config agree
        rosters = [dict(s) for s in p["test_functions"]]
        for i, s in enumerate(rosters):
            s.setdefault("name", f"G{i}")
        p["test_functions"] = rosters

    @staticmethod
    def from_file(path, experiment: str | None = None, **overrides) -> "ExperimentConfig":
        raw = json.loads(Path(path).read_text())
        kind = experiment or raw.get("experiment")
        if not kind:
            raise ValueError("config must carry an 'experiment' field or the CLI must name one")
        raw = {k: v for k, v in raw.items() if k != "experiment"}
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentConfig(experiment=kind, raw=raw)

    def selector(self):
        p = self.params
        return select_hydrodynamic_pde(p["alpha"], p["beta"], p["gamma"], p["d"], p["entropy_bound"])

    def model_for(self, n: int) -> ExclusionModel:
        p = self.params
        box = LatticeBox(d=p["d"], n=n, half_side=p["half_side"])
        kernel = JumpKernel(d=p["d"], gamma=p["gamma"], r_max=box.side)
        return ExclusionModel(kernel=kernel, barrier=BarrierSpec(p["alpha"], p["beta"]), box=box)

    def pairs(self) -> list[TestFunctionPair]:
        return [_pair_from_dict(spec, self.params["d"]) for spec in self.params["test_functions"]]

    def echo(self) -> dict:
        return {"experiment": self.experiment, **self.params}


def validate_reference_profile(h: Profile, decl: dict):
    """Check the declared reference-profile conditions on a grid.

    Conditions: values within [a_h, b_h] inside (0, 1); Lipschitz with
    constant L_h; constant equal to A_h beyond radius K_h.
    """
    a, b = decl.get("a_h", 0.05), decl.get("b_h", 0.95)
    L = decl.get("L_h", 10.0)
    K = decl.get("K_h", 2.0)
    A = decl.get("A_h")
    if not (0.0 < a < b < 1.0):
        raise ValueError("reference profile bounds must satisfy 0 < a_h < b_h < 1")
    grid = np.linspace(-K - 2.0, K + 2.0, 4001)
    vals = h.last_axis_value(grid)
    if np.any(vals < a - 1e-9) or np.any(vals > b + 1e-9):
        raise ValueError("reference profile leaves its declared [a_h, b_h] band")
    slopes = np.abs(np.diff(vals)) / np.diff(grid)
    if np.any(slopes > L + 1e-6):
        raise ValueError("reference profile violates its declared Lipschitz bound")
    far = np.abs(grid) >= K
    A_val = A if A is not None else float(vals[-1])
    if np.any(np.abs(vals[far] - A_val) > 1e-9):
        raise ValueError("reference profile is not constant beyond its declared radius K_h")


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    experiment: str
    replica: int  # -1 for aggregate rows
    n: int
    t: float
    name: str
    value: float
    se: float | None = None


@dataclass
class Report:
    experiment: str
    rows: list[ReportRow] = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(bool(v) for v in self.verdicts.values())

    def add(self, replica, n, t, name, value, se=None):
        self.rows.append(ReportRow(self.experiment, int(replica), int(n), float(t), str(name), float(value), se))


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def emit_reports(reports: list[Report], out_dir, config_echo: dict, seed: int, started: float, constants=None) -> dict:
    """Write one CSV per report plus a combined JSON summary.

    CSV header is exactly `experiment,replica,n,t,name,value,se`; identical
    configs and seeds reproduce the files byte for byte.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for rep in reports:
        path = out / f"{rep.experiment}.csv"
        lines = [CSV_HEADER]
        for r in rep.rows:
            lines.append(
                f"{r.experiment},{r.replica},{r.n},{_fmt(r.t)},{r.name},{_fmt(r.value)},{_fmt(r.se)}"
            )
        path.write_text("\n".join(lines) + "\n")
        paths.append(str(path))
    summary = {
        "config": config_echo,
        "constants": constants or [],
        "verdicts": {rep.experiment: {**rep.verdicts, "passed": rep.passed} for rep in reports},
        "info": {rep.experiment: rep.info for rep in reports},
        "seed": seed,
        "replica_ids": list(range(int(config_echo.get("replicas", 0)))),
        "wall_clock_seconds": time.time() - started,
        "outputs": paths,
    }
    spath = out / "summary.json"
    spath.write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n")
    summary["summary_path"] = str(spath)
    return summary


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)}")


def constants_table(cfg: ExperimentConfig) -> list[dict]:
    p = cfg.params
    rows = []
    for n in p["n_values"]:
        model = cfg.model_for(n)
        row = ModelConstants(p["gamma"], p["d"], n).as_dict()
        row.update(r_max=model.kernel.r_max, tail_mass=model.kernel.tail_mass)
        rows.append(row)
    return rows


def save_snapshots(traj: Trajectory, path):
    """Binary occupancy dump: little-endian uint32 header (d, n, L, count),
    then per snapshot a float64 time and the site-major bit-packed occupancy."""
    if traj.occupancies is None:
        raise ValueError("trajectory carries no occupancy snapshots")
    box = traj.model.box
    with open(path, "wb") as fh:
        np.array([box.d, box.n, box.half_side, len(traj.times)], dtype="<u4").tofile(fh)
        for k, t in enumerate(traj.times):
            np.array([t], dtype="<f8").tofile(fh)
            np.packbits(traj.occupancies[k], bitorder="little").tofile(fh)


def load_snapshots(path):
    """Inverse of save_snapshots: returns (box, times, occupancies)."""
    with open(path, "rb") as fh:
        header = np.fromfile(fh, dtype="<u4", count=4)
        d, n, L, count = (int(x) for x in header)
        box = LatticeBox(d=d, n=n, half_side=L)
        nbytes = (box.site_count + 7) // 8
        times = np.empty(count)
        occ = np.empty((count, box.site_count), dtype=np.uint8)
        for k in range(count):
            times[k] = np.fromfile(fh, dtype="<f8", count=1)[0]
            packed = np.fromfile(fh, dtype=np.uint8, count=nbytes)
            occ[k] = np.unpackbits(packed, bitorder="little")[: box.site_count]
    return box, times, occ


# ---------------------------------------------------------------------------
# Replica execution
# ---------------------------------------------------------------------------


def _build_hooks(kind: str, cfg: ExperimentConfig, model: ExclusionModel) -> list[HookSpec]:
    p = cfg.params
    hooks: list[HookSpec] = []
    if kind in ("convergence", "simulate", "martingale"):
        for tf in cfg.pairs():
            hooks.append(pairing_hook(tf, model))
            if kind != "convergence":
                hooks.append(generator_hook(tf, model))
    if kind in ("flux", "simulate", "stationarity"):
        w = max(1, int(round(p["flux_window"] * model.n)))
        w = min(w, model.box.radius)
        hooks.append(HookSpec("window:left", window_indicator_weights(model.box, -w, 0)))
        hooks.append(HookSpec("window:right", window_indicator_weights(model.box, 0, w)))
    if kind == "replacement":
        hooks.extend(_replacement_hooks(cfg, model))
    return hooks


def _hook_phi(tf: TestFunctionPair):
    shared = tf.common_time_factor()
    if shared is None:
        raise ValueError("harness hooks need a common polynomial time factor")
    c = tuple(shared.coeffs) + (0.0, 0.0, 0.0)
    return c[0], c[1], c[2]


def _stripped_slope_at_zero(branch) -> float:
    """Time-stripped normal slope of one branch at the hyperplane (lateral origin)."""
    total = 0.0
    for term in branch.terms:
        block = term.coefficient * float(term.factors[-1].d1(np.zeros(1))[0])
        for f in term.factors[:-1]:
            block *= float(f.value(np.zeros(1))[0])
        total += block
    return total


def _replacement_hooks(cfg: ExperimentConfig, model: ExclusionModel) -> list[HookSpec]:
    p = cfg.params
    tf = cfg.pairs()[0]
    box = model.box
    phi = _hook_phi(tf)
    hooks = []
    if p["beta"] < 1.0:
        # bulk mode: integrand theta/n^d * crossing-part difference sums
        raw = spatial_values(tf, box)
        w = model.theta_n / box.n**box.d * inbox_difference_weights(
            raw, box, model.gamma, slow_factor=1.0, crossing_only=True
        )
        hooks.append(HookSpec("replacement:bulk", w, phi))
    else:
        # boundary mode (d = 1): drift-term sums against one-sided window averages
        kap = ModelConstants(p["gamma"], p["d"], box.n).kappa
        coords = box.coordinate_grid()[:, -1]
        lam = one_sided_lambda(model.gamma, box.d, coords)
        slope_plus = _stripped_slope_at_zero(tf.plus)
        slope_minus = _stripped_slope_at_zero(tf.minus)
        scale = model.theta_n / box.n ** (box.d + 1)
        wr_plus = np.where(coords >= 0, slope_plus * lam, 0.0) * scale
        wr_minus = np.where(coords < 0, slope_minus * lam, 0.0) * scale
        for eps in p["epsilons"]:
            ell = min(max(1, math.ceil(eps * box.n)), box.radius - 1)
            right = window_indicator_weights(box, 1, ell + 1)
            left = window_indicator_weights(box, -ell, 0)
            hooks.append(HookSpec(f"replacement:right:{eps:g}", wr_plus - kap * slope_plus * right, phi))
            hooks.append(HookSpec(f"replacement:left:{eps:g}", wr_minus + kap * slope_minus * left, phi))
    return hooks


def _run_block(args):
    """Run a block of replicas for one n (used by the process pool)."""
    cfg_raw, experiment, kind, n, replica_ids = args
    cfg = ExperimentConfig(experiment=experiment, raw=cfg_raw)
    p = cfg.params
    model = cfg.model_for(n)
    hooks = _build_hooks(kind, cfg, model)
    snaps = [t for t in p["snapshot_times"] if t <= p["T"]]
    out = []
    for rep in replica_ids:
        rng = replica_rng(p["seed"], _stream_id(n, rep))
        cfg0 = init_from_profile(cfg.profile, model.box, rng)
        traj = simulate(
            cfg0,
            model,
            T=p["T"],
            snapshot_times=snaps,
            hooks=tuple(hooks),
            rng=rng,
            seed_key=(p["seed"], _stream_id(n, rep)),
            store_occupancy=False,
        )
        out.append(
            {
                "replica": rep,
                "times": traj.times,
                "hook_names": traj.hook_names,
                "hook_phi": traj.hook_phi,
                "P": traj.snap_P,
                "I1": traj.snap_I1,
                "I2": traj.snap_I2,
                "counters": traj.counters,
                "particles": traj.particle_count,
            }
        )
    return n, out


def _stream_id(n: int, replica: int) -> int:
    # independent streams per (n, replica); n < 2^20, replicas < 2^12
    return (n << 20) + replica


def _run_replicas(cfg: ExperimentConfig, kind: str, n: int) -> list[dict]:
    p = cfg.params
    reps = list(range(p["replicas"]))
    jobs = max(1, int(p["jobs"]))
    if jobs == 1:
        return _run_block((cfg.raw, cfg.experiment, kind, n, reps))[1]
    blocks = [reps[i::jobs] for i in range(jobs)]
    results = {}
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for _, out in pool.map(
            _run_block, [(cfg.raw, cfg.experiment, kind, n, block) for block in blocks if block]
        ):
            for item in out:
                results[item["replica"]] = item
    return [results[r] for r in sorted(results)]


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def _reference_pairings(cfg: ExperimentConfig, solution: AnalyticSolution, times) -> dict:
    """integral of G(u) rho_t(u) du for each roster pair and snapshot time."""
    from .pde import _space_grid

    out = {}
    for tf in cfg.pairs():
        pts, w = _space_grid(tf, order=48)
        vals = {}
        for t in times:
            vals[t] = float(np.sum(w * tf.value(t, pts) * solution.value(t, pts)))
        out[tf.name] = vals
    return out


def run_convergence_experiment(cfg: ExperimentConfig) -> Report:
    """Hydrodynamic ladder: empirical pairings against the selected PDE.

    For each n, replica, snapshot and test function, Delta = mean over
    replicas of |<pi_t, G> - integral of G rho_t|; the verdict demands
    Delta(n) strictly decreasing per test function (aggregated over t > 0)
    with the final value below the configured threshold.
    """
    selector = cfg.selector().require_supported()
    p = cfg.params
    solution = solution_for(selector, cfg.profile)
    report = Report("convergence", info={"equation": selector.equation.value, "kappa": selector.kappa})
    times = [0.0] + [t for t in p["snapshot_times"] if t <= p["T"]]
    if p["T"] not in times:
        times.append(p["T"])
    refs = _reference_pairings(cfg, solution, times)

    ladder = {tf.name: [] for tf in cfg.pairs()}
    bias_candidates = []
    for n in p["n_values"]:
        results = _run_replicas(cfg, "convergence", n)
        snaps = results[0]["times"]
        for tf in cfg.pairs():
            hname = f"{tf.name}:pairing"
            hidx = results[0]["hook_names"].index(hname)
            phi = results[0]["hook_phi"][hidx]
            per_rep = np.stack(
                [
                    (phi[0] + snaps * (phi[1] + snaps * phi[2])) * r["P"][:, hidx]
                    for r in results
                ]
            )
            devs = np.empty_like(per_rep)
            for k, t in enumerate(snaps):
                ref = refs[tf.name][min(refs[tf.name], key=lambda x: abs(x - t))]
                devs[:, k] = per_rep[:, k] - ref
                for rep_i, r in enumerate(results):
                    report.add(r["replica"], n, t, f"pairing:{tf.name}", per_rep[rep_i, k])
            absdev = np.abs(devs)
            delta_t = absdev.mean(axis=0)
            se_t = absdev.std(axis=0, ddof=1) / math.sqrt(len(results))
            for k, t in enumerate(snaps):
                report.add(-1, n, t, f"delta:{tf.name}", delta_t[k], se_t[k])
            # t = 0 row: signed deviation is pure sampling noise plus O(1/n) bias
            signed0 = devs[:, 0]
            m0, s0 = signed0.mean(), signed0.std(ddof=1) / math.sqrt(len(results))
            report.add(-1, n, 0.0, f"signed-mean-t0:{tf.name}", m0, s0)
            bias_candidates.append((abs(m0) - 4.0 * s0) * n)
            ladder[tf.name].append(float(absdev[:, 1:].mean()))

    bias_c = p["thresholds"]["bias_constant"]
    if bias_c == "auto":
        bias_c = max(0.0, max(bias_candidates))
    report.info["bias_constant"] = bias_c
    final_tol = p["thresholds"]["final_delta"]
    for name, deltas in ladder.items():
        for i, (n, dv) in enumerate(zip(p["n_values"], deltas)):
            report.add(-1, n, p["T"], f"delta-aggregate:{name}", dv)
        report.verdicts[f"decreasing:{name}"] = all(a > b for a, b in zip(deltas, deltas[1:]))
        report.verdicts[f"final-below-threshold:{name}"] = deltas[-1] < final_tol
    # t = 0 association check at the largest n
    for name in ladder:
        rows = [r for r in report.rows if r.name == f"signed-mean-t0:{name}" and r.n == p["n_values"][-1]]
        r = rows[-1]
        report.verdicts[f"t0-association:{name}"] = bool(
            abs(r.value) <= 4.0 * r.se + bias_c / r.n + 1e-12
        )
    return report


def run_barrier_flux_experiment(cfg: ExperimentConfig) -> Report:
    """Decoupling study: per-side window densities and crossing accounting.

    Requires (beta, gamma) in the decoupled region R0; beta = 0 runs as the
    coupled control, compared against the free solution instead.
    """
    p = cfg.params
    control = p["beta"] == 0.0
    if not control and not in_region_R0(p["beta"], p["gamma"]):
        raise UnsupportedRegimeError(
            "unsupported-flux-regime",
            "the barrier-flux experiment needs (beta, gamma) in "
            "R0 = ([1,inf) x {2}) U ((1,inf) x (2,inf)) for decoupling, or beta = 0 "
            "as the coupled control",
        )
    eq = Equation.FREE_HEAT if control else Equation.NEUMANN_HYPERPLANE
    kap = ModelConstants(p["gamma"], p["d"], p["n_values"][0]).kappa
    solution = AnalyticSolution(cfg.profile, kap, eq)
    report = Report("flux", info={"mode": "control" if control else "decoupled", "equation": eq.value})

    w_macro = p["flux_window"]
    from .pde import _gl_nodes

    nodes_l, weights_l = _gl_nodes([(-w_macro, 0.0)], 64)
    nodes_r, weights_r = _gl_nodes([(0.0, w_macro)], 64)

    def last_axis_points(nodes):
        pts = np.zeros((len(nodes), p["d"]))
        pts[:, -1] = nodes
        return pts

    for n in p["n_values"]:
        results = _run_replicas(cfg, "flux", n)
        snaps = results[0]["times"]
        i_left = results[0]["hook_names"].index("window:left")
        i_right = results[0]["hook_names"].index("window:right")
        ok_sides = True
        for side, hidx, nodes, wts in (
            ("left", i_left, nodes_l, weights_l),
            ("right", i_right, nodes_r, weights_r),
        ):
            pts = last_axis_points(nodes)
            vals = np.stack([r["P"][:, hidx] for r in results])
            for k, t in enumerate(snaps):
                ref = float(np.sum(wts * solution.value(t, pts))) / w_macro
                mean = vals[:, k].mean()
                se = vals[:, k].std(ddof=1) / math.sqrt(len(results))
                report.add(-1, n, t, f"window-density:{side}", mean, se)
                report.add(-1, n, t, f"window-reference:{side}", ref)
                tol = 4.0 * se + p["thresholds"].get("bias_allowance", 2.0) / n
                if abs(mean - ref) > tol:
                    ok_sides = False
        report.verdicts[f"window-density-matches:n={n}"] = ok_sides

        trials = sum(r["counters"]["crossing_trials"] for r in results)
        accepted = sum(r["counters"]["crossing_accepted"] for r in results)
        net = sum(r["counters"]["crossing_up"] - r["counters"]["crossing_down"] for r in results)
        mu = cfg.model_for(n).slow_probability * trials
        bound = float(stats.poisson.ppf(0.999, mu)) if mu > 0 else 0.0
        report.add(-1, n, p["T"], "crossing-trials", trials)
        report.add(-1, n, p["T"], "crossing-accepted", accepted)
        report.add(-1, n, p["T"], "crossing-net", net)
        report.add(-1, n, p["T"], "crossing-poisson-bound", bound)
        if control:
            report.verdicts[f"crossings-occur:n={n}"] = accepted > 0
        else:
            report.verdicts[f"crossing-bound:n={n}"] = accepted <= bound
    return report


def run_operator_convergence(cfg: ExperimentConfig) -> Report:
    """Ladder of L1 operator errors with monotonicity verdicts."""
    p = cfg.params
    cases = p["operator_cases"]
    if cases is None:
        cases = []
        for gamma in (2.0, 3.0):
            for spec in default_smooth_roster(p["d"]):
                cases.append({"gamma": gamma, "d": p["d"], "operator": "full", "pair": spec})
    report = Report("operators")
    table = []
    for case in cases:
        gamma = case["gamma"]
        d = case.get("d", p["d"])
        opname = case.get("operator", "full")
        tf = _pair_from_dict(dict(case["pair"]), d)
        label = f"{opname}:g{gamma:g}:d{d}:{tf.name or 'G'}"
        try:
            errors = []
            for n in p["n_values"]:
                res = l1_convergence_error(
                    tf,
                    n,
                    gamma,
                    operator=opname,
                    t_max=p["T"] if p["T"] > 0 else 1.0,
                    theta_override=case.get("theta_override"),
                )
                errors.append(res.error)
                table.append((gamma, d, n, opname, res.error))
                report.add(-1, n, 0.0, f"l1:{label}", res.error)
                report.add(-1, n, 0.0, f"l1-tail:{label}", res.tail_bound + res.far_bound)
            report.verdicts[f"monotone:{label}"] = all(a > b for a, b in zip(errors, errors[1:]))
            report.info[label] = {"errors": errors}
        except ValueError as exc:
            report.verdicts[f"precondition:{label}"] = False
            report.info[label] = {"error": str(exc)}
    report.info["table"] = table
    return report


def operators_table_csv(report: Report) -> str:
    """Module-interface table for the operators command: gamma,d,n,operator,error."""
    lines = ["gamma,d,n,operator,error"]
    for gamma, d, n, opname, err in report.info.get("table", []):
        lines.append(f"{repr(float(gamma))},{d},{n},{opname},{repr(float(err))}")
    return "\n".join(lines) + "\n"


def run_replacement_residual(cfg: ExperimentConfig) -> Report:
    """Residual studies for the barrier terms.

    beta in [0, 1): Monte Carlo estimate of the absolute integrated
    crossing-part pairing, expected to vanish along the ladder.  beta > 1,
    gamma > 2, d = 1: the drift-term pairings compared against one-sided
    window averages over an (n, epsilon) grid.  Both modes require an
    entropy-style initialization (a declared reference profile).
    """
    p = cfg.params
    bulk = p["beta"] < 1.0
    if not bulk and not (p["beta"] > 1.0 and p["gamma"] > 2.0 and p["d"] == 1):
        raise UnsupportedRegimeError(
            "unsupported-replacement-regime",
            "replacement residuals are defined for beta in [0,1) (bulk mode) or "
            "beta > 1, gamma > 2, d = 1 (boundary mode)",
        )
    if cfg.reference is None:
        raise UnsupportedRegimeError(
            "missing-reference-profile",
            "replacement residuals require an entropy-style initialization: "
            "declare reference_profile with (a_h, b_h, L_h, K_h, A_h)",
        )
    report = Report("replacement", info={"mode": "bulk" if bulk else "boundary"})
    entropy_col = []
    residual_ladder = {}
    for n in p["n_values"]:
        model = cfg.model_for(n)
        H = relative_entropy_product(cfg.profile, cfg.reference, model.box, n)
        Hn = H / model.box.n**model.d
        entropy_col.append(Hn)
        report.add(-1, n, 0.0, "entropy-per-volume", Hn)
        results = _run_replicas(cfg, "replacement", n)
        names = results[0]["hook_names"]
        for hidx, hname in enumerate(names):
            if not hname.startswith("replacement:"):
                continue
            finals = np.array([abs(r["I2"][-1, hidx]) for r in results])
            mean = finals.mean()
            se = finals.std(ddof=1) / math.sqrt(len(results))
            report.add(-1, n, p["T"], f"residual:{hname}", mean, se)
            residual_ladder.setdefault(hname, []).append(mean)
    for hname, ladder in residual_ladder.items():
        report.verdicts[f"decreasing:{hname}"] = all(a > b for a, b in zip(ladder, ladder[1:]))
    finite = all(np.isfinite(entropy_col))
    spread_ok = finite and max(entropy_col) <= 1.5 * min(entropy_col) + 1e-9
    report.verdicts["entropy-bounded"] = spread_ok
    report.info["entropy_per_volume"] = entropy_col
    return report


def run_martingale_suite(cfg: ExperimentConfig) -> Report:
    """Zero-mean and variance-decay checks for the compensated pairing."""
    p = cfg.params
    report = Report("martingale")
    pairs = cfg.pairs()
    var_ladder = {tf.name: [] for tf in pairs}
    for n in p["n_values"]:
        results = _run_replicas(cfg, "martingale", n)
        snaps = results[0]["times"]
        names = results[0]["hook_names"]
        for tf in pairs:
            ip = names.index(f"{tf.name}:pairing")
            ig = names.index(f"{tf.name}:generator")
            phi = results[0]["hook_phi"][ip]
            phit = phi[0] + snaps * (phi[1] + snaps * phi[2])
            Ms = np.stack(
                [
                    phit * r["P"][:, ip]
                    - phit[0] * r["P"][0, ip]
                    - r["I1"][:, ip]
                    - r["I2"][:, ig]
                    for r in results
                ]
            )
            mean = Ms.mean(axis=0)
            se = Ms.std(axis=0, ddof=1) / math.sqrt(len(results))
            ok = True
            for k, t in enumerate(snaps):
                report.add(-1, n, t, f"martingale-mean:{tf.name}", mean[k], se[k])
                if k > 0 and abs(mean[k]) > 4.0 * se[k]:
                    ok = False
            report.verdicts[f"zero-mean:{tf.name}:n={n}"] = ok
            second = float(np.mean(Ms[:, -1] ** 2))
            report.add(-1, n, p["T"], f"martingale-second-moment:{tf.name}", second)
            var_ladder[tf.name].append(second)
    for name, ladder in var_ladder.items():
        report.verdicts[f"second-moment-nonincreasing:{name}"] = all(
            a >= b for a, b in zip(ladder, ladder[1:])
        )
    return report


def run_stationarity_suite(cfg: ExperimentConfig) -> Report:
    """Constant-profile control: window densities must stay at the density."""
    p = cfg.params
    if cfg.profile.kind != "constant":
        raise ValueError("the stationarity suite requires a constant profile")
    level = cfg.profile.left
    report = Report("stationarity")
    for n in p["n_values"]:
        results = _run_replicas(cfg, "stationarity", n)
        snaps = results[0]["times"]
        names = results[0]["hook_names"]
        ok = True
        for side in ("left", "right"):
            hidx = names.index(f"window:{side}")
            vals = np.stack([r["P"][:, hidx] for r in results])
            for k, t in enumerate(snaps):
                mean = vals[:, k].mean()
                se = vals[:, k].std(ddof=1) / math.sqrt(len(results))
                report.add(-1, n, t, f"window-density:{side}", mean, se)
                if abs(mean - level) > 4.0 * se:
                    ok = False
        report.verdicts[f"stationary:n={n}"] = ok
    return report


def run_simulate_experiment(cfg: ExperimentConfig) -> Report:
    """Raw replicated simulation: pairings, window densities, counters.

    The report info carries the aggregated series as
    name -> {"t": [...], "mean": [...], "se": [...]}.
    """
    p = cfg.params
    report = Report("simulate")
    aggregates = {}
    for n in p["n_values"]:
        results = _run_replicas(cfg, "simulate", n)
        snaps = results[0]["times"]
        names = results[0]["hook_names"]
        per_hook = {hname: [] for hname in names}
        for r in results:
            for hidx, hname in enumerate(names):
                phi = r["hook_phi"][hidx]
                phit = phi[0] + snaps * (phi[1] + snaps * phi[2])
                series = phit * r["P"][:, hidx] if hname.endswith(":pairing") else r["P"][:, hidx]
                per_hook[hname].append(series)
                for k, t in enumerate(snaps):
                    report.add(r["replica"], n, t, hname, series[k])
            for cname, cval in r["counters"].items():
                report.add(r["replica"], n, p["T"], f"counter:{cname}", cval)
        for hname, rows in per_hook.items():
            arr = np.stack(rows)
            mean = arr.mean(axis=0)
            se = arr.std(axis=0, ddof=1) / math.sqrt(len(rows)) if len(rows) > 1 else np.full(len(snaps), np.nan)
            aggregates[f"{hname}:n={n}"] = {"t": list(snaps), "mean": list(mean), "se": list(se)}
            for k, t in enumerate(snaps):
                report.add(-1, n, t, hname, mean[k], se[k])
        report.verdicts[f"completed:n={n}"] = True
    report.info["aggregates"] = aggregates
    return report


def dump_trajectory_snapshots(cfg: ExperimentConfig, out_dir) -> list[str]:
    """Re-run replica 0 per n with stored occupancy and write binary dumps.

    Deterministic: the dump trajectory is the same one the experiment saw.
    """
    p = cfg.params
    paths = []
    for n in p["n_values"]:
        model = cfg.model_for(n)
        rng = replica_rng(p["seed"], _stream_id(n, 0))
        cfg0 = init_from_profile(cfg.profile, model.box, rng)
        traj = simulate(
            cfg0,
            model,
            T=p["T"],
            snapshot_times=[t for t in p["snapshot_times"] if t <= p["T"]],
            rng=rng,
            seed_key=(p["seed"], _stream_id(n, 0)),
            store_occupancy=True,
        )
        path = Path(out_dir) / f"snapshots_n{n}.bin"
        save_snapshots(traj, path)
        paths.append(str(path))
    return paths


def run_pde_report(cfg: ExperimentConfig) -> tuple[Report, list[str]]:
    """Evaluate the selected solution on a grid and compute weak residuals."""
    p = cfg.params
    selector = cfg.selector().require_supported()
    solution = solution_for(selector, cfg.profile)
    pspec = p["pde"] or {}
    lo = pspec.get("lo", -2.0)
    hi = pspec.get("hi", 2.0)
    points = int(pspec.get("points", 81))
    times = pspec.get("times", [0.0, p["T"] / 2, p["T"]])
    tol = p["thresholds"]["residual_tol"]

    report = Report("pde", info={"equation": selector.equation.value, "kappa": selector.kappa})
    grid_lines = ["t," + ",".join(f"u{j + 1}" for j in range(p["d"])) + ",rho"]
    axis = np.linspace(lo, hi, points)
    mesh = np.meshgrid(*([axis] * p["d"]), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    for t in times:
        vals = solution.value(t, pts)
        for row, v in zip(pts, vals):
            coords = ",".join(repr(float(c)) for c in row)
            grid_lines.append(f"{repr(float(t))},{coords},{repr(float(v))}")

    for tf in cfg.pairs():
        if selector.equation is Equation.NEUMANN_WITH_TRACE and p["d"] == 1:
            res = weak_residual_neu(solution, tf, cfg.profile, selector.kappa, p["T"])
        else:
            if selector.test_space == "neumann" and not tf.neumann:
                continue
            if selector.test_space == "smooth" and not tf.is_smooth:
                continue
            res = weak_residual_dif(solution, tf, cfg.profile, selector.kappa, p["T"])
        report.add(-1, 0, p["T"], f"residual:{tf.name}", res.value)
        report.verdicts[f"residual-small:{tf.name}"] = abs(res.value) < tol
    return report, grid_lines
