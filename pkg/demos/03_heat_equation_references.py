"""
Closed-form heat references and weak-formulation residuals
==========================================================

Monte Carlo output is judged against exact solutions: Gaussian convolution
for the free equation, the method of images for the reflecting hyperplane.
The weak-formulation functionals vanish on the matching solution and flag a
mismatched equation loudly - the numerical shadow of uniqueness.
"""

import numpy as np

from exclusim import (
    AnalyticSolution,
    Equation,
    Profile,
    kappa_gamma,
    select_hydrodynamic_pde,
    weak_residual_dif,
    weak_residual_neu,
)
from exclusim.testfunctions import discontinuous_pair, smooth_pair

kappa = kappa_gamma(3.0, 1)
step = Profile.step(1.0, 0.0)

# ----------------------------------------------------------------------------
# 1. Which equation governs which parameter region.
# ----------------------------------------------------------------------------
print("alpha beta gamma d entropy ->", "equation")
for args in ((1, 0, 3, 1, False), (1, 2, 3, 1, False), (2, 2, 3, 1, True), (1, 1, 3, 1, True), (1, 0.5, 2, 2, True)):
    sel = select_hydrodynamic_pde(*args)
    print("  ", args, "->", sel.equation.value)

# ----------------------------------------------------------------------------
# 2. The two evolutions of step data: the free solution diffuses across the
#    hyperplane, the reflected one freezes (no flux, flat one-sided slopes).
# ----------------------------------------------------------------------------
free = AnalyticSolution(step, kappa, Equation.FREE_HEAT)
refl = AnalyticSolution(step, kappa, Equation.NEUMANN_HYPERPLANE)
us = np.linspace(-1.5, 1.5, 7)[:, None]
print("\nu:         " + "  ".join(f"{u[0]:+.2f}" for u in us))
print("free t=.2: " + "  ".join(f"{v:.3f}" for v in free.value(0.2, us)))
print("refl t=.2: " + "  ".join(f"{v:.3f}" for v in refl.value(0.2, us)))

# ----------------------------------------------------------------------------
# 3. Residuals: small on the right equation, order one on the wrong one.
#    A test function with slope at the hyperplane is what detects the error.
# ----------------------------------------------------------------------------
probe = smooth_pair(d=1, centers=[0.3], name="offset-bump")
glued = discontinuous_pair(d=1, name="glued")
print("\nresidual of the free solution in the free form:      ", end="")
print(f"{weak_residual_dif(free, probe, step, kappa, t=0.25).value:+.2e}")
print("residual of the REFLECTED solution in the free form:  ", end="")
print(f"{weak_residual_dif(refl, probe, step, kappa, t=0.25).value:+.2e}   <- wrong equation")
print("residual of the reflected solution in the trace form: ", end="")
print(f"{weak_residual_neu(refl, glued, step, kappa, t=0.25).value:+.2e}")

# one-sided boundary traces enter the trace form explicitly
print("\nreflected traces at t=0.25:", refl.trace("left", 0.25), "/", refl.trace("right", 0.25))
