"""
The hydrodynamic limit, watched at desk scale
=============================================

Starting from a product measure over a step profile, the empirical density
pairings track the heat-equation solution ever more closely as the scale n
doubles.  This is the free case (no effective barrier); the deviations decay
like a mix of sampling noise (n^-1/2) and lattice bias (n^-1).
"""

import numpy as np

from exclusim.harness import ExperimentConfig, run_convergence_experiment

cfg = ExperimentConfig(
    "convergence",
    {
        "d": 1,
        "gamma": 3.0,
        "alpha": 1.0,
        "beta": 0.0,
        "n_values": [32, 64, 128],
        "T": 0.1,
        "replicas": 30,
        "seed": 20260810,
        "profile": {"kind": "step", "left": 1.0, "right": 0.0},
    },
)
report = run_convergence_experiment(cfg)

print(f"governing equation: {report.info['equation']}  (kappa = {report.info['kappa']:.6f})\n")
names = sorted({r.name.split(":")[1] for r in report.rows if r.name.startswith("delta-aggregate:")})
print(f"{'test function':>14s}  " + "  ".join(f"{'n=' + str(n):>9s}" for n in cfg.params["n_values"]))
for name in names:
    vals = [r.value for r in report.rows if r.name == f"delta-aggregate:{name}"]
    print(f"{name:>14s}  " + "  ".join(f"{v:9.5f}" for v in vals))

print("\nverdicts:")
for k, v in report.verdicts.items():
    print(f"  {k}: {'PASS' if v else 'FAIL'}")

# the full time resolution is in the report rows; save a profile comparison
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from exclusim import AnalyticSolution, Equation, Profile, kappa_gamma
    from exclusim.model import BarrierSpec, JumpKernel, LatticeBox
    from exclusim.observables import Mesh, coarse_density
    from exclusim.sampling import replica_rng
    from exclusim.simulation import ExclusionModel, init_from_profile, simulate

    n = 128
    box = LatticeBox(d=1, n=n, half_side=4)
    model = ExclusionModel(JumpKernel(d=1, gamma=3.0, r_max=box.side), BarrierSpec(1.0, 0.0), box)
    g = Profile.step(1.0, 0.0)
    fields = []
    for rep in range(20):
        c0 = init_from_profile(g, box, replica_rng(1, rep))
        traj = simulate(c0, model, T=0.1, snapshot_times=[0.1], seed_key=(1, rep))
        mesh = Mesh(lo=(-2 * n,), hi=(2 * n,), shape=(40,))
        fields.append(coarse_density(traj.configuration_at(-1), n, mesh).values[0])
    mids = np.linspace(-2, 2, 41)
    mids = 0.5 * (mids[:-1] + mids[1:])
    sol = AnalyticSolution(g, kappa_gamma(3.0, 1), Equation.FREE_HEAT)
    plt.figure(figsize=(6, 3.2))
    plt.plot(mids, np.mean(fields, axis=0), "o", ms=3.5, label="simulation, n=128 (20 replicas)")
    uu = np.linspace(-2, 2, 300)[:, None]
    plt.plot(uu[:, 0], sol.value(0.1, uu), "-", label="heat equation")
    plt.xlabel("u")
    plt.ylabel("density at t = 0.1")
    plt.legend(frameon=False)
    plt.tight_layout()
    plt.savefig("hydro_ladder_profile.png", dpi=130)
    print("\nwrote hydro_ladder_profile.png")
except ImportError:
    pass
