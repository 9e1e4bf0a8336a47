"""Instability of the radial hedgehog when twist is cheap.

With k = (1, 0.1, 1) the margin 8(k2 - k1) + k3 is negative, so x/|x| is
not a minimiser on the unit ball.  The flow trades a little splay for a lot
of twist and bend.  Pass a spacing on the command line to refine
(default 1/4, a few seconds).
"""
# %%
import sys

from frankoseen.energy import helein_margin
from frankoseen.scenarios import get_preset, run_scenario

h = float(sys.argv[1]) if len(sys.argv) > 1 else 0.25
scen = get_preset("helein").with_overrides(h=h)
print("stability margin:", helein_margin(scen.constants))

# %%
rep = run_scenario(scen)
print(f"{rep.n_vertices} vertices, {rep.iterations} steps, tau = {rep.tau:.4g}")
print(f"{'':8s}{'total':>10s}{'splay':>10s}{'twist':>10s}{'bend':>10s}")
for label, e in (("initial", rep.initial), ("final", rep.final)):
    print(f"{label:8s}{e.total:10.4f}{e.splay:10.4f}{e.twist:10.4f}{e.bend:10.4f}")

# %%
# the nodal lengths only grow; err_inf is the largest excess of |n|^2 over 1
print(f"err_1 = {rep.err1:.3e}, err_inf = {rep.err_inf:.3e}")
