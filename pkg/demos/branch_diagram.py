"""Solution branches of the radial Neumann problem as q grows.

For p = 1.97 in one dimension, only the constant solution u = 1 exists for
small q.  Past a fold near q = 13 two nonconstant nondecreasing solutions
appear, both starting below 1.  The lower one drifts toward G(0), the
starting value of the limit profile; the upper one hugs the constant line
ever more tightly (its offset from 1 decays exponentially in q).

Run:  python demos/branch_diagram.py [outdir]
"""
import sys
from pathlib import Path

from nehari_cone import RadialGrid, make_params, solve_G, trace_branch
from nehari_cone.shooting import plot_branch_svg

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
out.mkdir(exist_ok=True)

P = make_params(1.97, 40.0, 1, 3.0)
grid = RadialGrid.uniform(1024, 1)
branch = trace_branch(P, (3.0, 100.0), 60, grid=grid)
G = solve_G(P, grid)

print(f"first sampled q with nonconstant solutions: {branch.fold_q:.2f}")
print(f"G(0) = {G.d:.6f}")
print(f"{'q':>7} {'lower u(0)':>12} {'upper u(0)-1':>14} {'upper I-I(1)':>14}")
for lo, up in list(zip(branch.by_label("lower"), branch.by_label("upper")))[::6]:
    print(f"{lo.q:7.2f} {lo.d:12.6f} {up.e0:14.3e} {up.energy_gap:14.3e}")

branch.write(out / "branch.csv")
branch.write(out / "branch.json")
plot_branch_svg(branch, out / "branch.svg", g0=G.d)
print(f"wrote {out}/branch.csv, branch.json, branch.svg")
