"""How strongly is u = 1 a local minimizer on the Nehari set?

Random Nehari elements within W^{1,p} distance 0.05 of 1 are drawn and
their energy is compared with I(1).  At p = 1.5, q = 40 every sample sits
above; by q = 100 a few dip below, because the basin around 1 narrows as q
grows.  At p = 1.97 the basin is far smaller than this radius and about
half the samples fall below I(1).

Run:  python demos/local_min_diagnostics.py
"""
from nehari_cone import check_local_min_at_1, make_params

for p, ell in ((1.5, 2.5), (1.97, 3.0)):
    for q in (40.0, 100.0):
        d = check_local_min_at_1(make_params(p, q, 1, ell), 300, 0.05, seed=0)
        print(f"p={p:<5} q={q:<5g} below I(1): {d.n_below:3d}/{d.n_valid}  M_q={d.M_q:+.3e}  "
              f"PW ratio {d.pw_ratio:.3f} -> {d.pw_ratio_doubled:.3f}")
