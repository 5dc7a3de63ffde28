"""A third solution by a two-dimensional mountain pass, at p = 1.5, q = 40.

Here the constant u = 1 is a strict local minimizer of the energy on the
Nehari set.  A surface spanned by 1, u_q and their multiples is deformed by
the fixed-point flow while its boundary stays frozen.  The highest point on
the deformed surface sits above I(1), and Newton from there lands on a
solution v_q with u_q(0) < v_q(0) < 1.  Shooting finds the same solution.

Run:  python demos/mountain_pass_moderate_p.py [outdir]
"""
import sys
from pathlib import Path

import numpy as np

from nehari_cone import EnergyModel, RadialGrid, find_neumann_roots, make_params, minimize_on_nehari, mountain_pass
from nehari_cone.mountain_pass import miranda_check
from nehari_cone.params import sup_distance

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
out.mkdir(exist_ok=True)

P = make_params(1.5, 40.0, 1, 2.5)
grid = RadialGrid.uniform(1024, 1)
E1 = float(EnergyModel(P, grid).energy(np.ones(grid.size)))

u_q = minimize_on_nehari(P, 6, grid)
surf, res, (R1, R2) = mountain_pass(P, u_q, grid)
print(f"I(1) = {E1:.8f}, I(u_q) = {u_q.energy:.8f}, u_q(0) = {u_q.u0:.6f}")
print(f"box R1 = {R1:g}, R2 = {R2:g}; {len(surf.history)} sweeps")
print(f"d_q - I(1) = {res.d_q - E1:.3e}")
print(f"sign-crossing cell: {miranda_check(surf, 0.05)}")
print(f"Newton refinement: {res.reason}")

roots = [s for s in find_neumann_roots(P, (0.0, 1.0), 100, grid=grid) if s.monotone and s.e0 < 0]
if res.accepted:
    v = res.record
    print(f"v_q(0) = {v.u0:.6f}, I(v_q) - I(1) = {v.energy - E1:.4e}")
    print(f"sup distance to the upper shooting root: {sup_distance(v.u, roots[-1].u):.2e}")
    v.save(out / "v_q.json")
u_q.save(out / "u_q.json")
(out / "mp_history.csv").write_text(surf.history_csv())
print(f"wrote {out}/u_q.json, v_q.json, mp_history.csv")
