"""
Worst-case perturbations of a quadratic loss
============================================

A sample x is moved inside a ball of radius delta so that x^T C x grows as
much as possible. Three answers are compared: the exact l2 maximum, the exact
l-infinity maximum (vertex enumeration) and the closed-form surrogate that
upper-bounds it.
"""

import numpy as np

from advprec.adversary import (
    PerturbationSpec,
    expansion_terms,
    surrogate_linf,
    worst_case,
    worst_case_l2,
    worst_case_linf_exact,
)

rng = np.random.default_rng(0)
C = np.array([[2.0, -0.6, 0.0], [-0.6, 1.0, 0.3], [0.0, 0.3, 0.5]])
x = rng.standard_normal(3)
print("x^T C x =", x @ C @ x)

# the l2 ball sits inside the l-infinity ball of the same radius
for delta in (0.1, 0.5, 1.0):
    a = worst_case_l2(x, C, delta).value
    b = worst_case_linf_exact(x, C, delta).value
    c = surrogate_linf(x, C, delta)
    print(f"delta={delta:4.1f}  l2={a:8.4f}  linf={b:8.4f}  surrogate={c:8.4f}")

# the l2 maximizer and its dual multiplier
res = worst_case_l2(x, C, 0.5)
print("maximizer", res.maximizer, "norm", np.linalg.norm(res.maximizer), "lambda", res.dual_lambda)

# small radii: the gain is first order in delta plus a second-order correction
for p in (2, "inf"):
    for delta in (1e-1, 1e-2, 1e-3):
        spec = PerturbationSpec(p, delta)
        t = expansion_terms(x, C, spec)
        r = worst_case(x, C, spec).gain - (t.first + t.second)
        print(f"p={p!s:>3} delta={delta:.0e}  first={t.first:.3e}  second={t.second:.3e}  remainder={r:.1e}")
