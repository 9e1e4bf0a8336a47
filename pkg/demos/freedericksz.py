"""Magnetic Freedericksz transition in a planar cell.

A slab (0,1)^2 x (0,1/2) anchored along e1 at top and bottom is exposed to
a vertical field.  Above the critical strength the director tilts into the
field (mostly splay); below it the perturbation relaxes back to e1.
"""
# %%
import numpy as np

from frankoseen.energy import freedericksz_threshold
from frankoseen.scenarios import get_preset, prepare
from frankoseen.flow import run_gradient_flow

base = get_preset("freedericksz").with_overrides(h=1 / 8)
fc = base.constants
print("critical field: %.4f" % freedericksz_threshold(fc.k1, fc.chi_A, 0.5))

# %%
for H in (1.0, 9.5):
    scen = base.with_overrides(H=(0.0, 0.0, H))
    mesh, dofmap, n0, *_ = prepare(scen)
    state = run_gradient_flow(mesh, n0, scen.constants, dofmap, scen.flow_config())
    e = state.energy
    tilt = np.degrees(np.arcsin(np.clip(np.abs(state.n[:, 2]) / np.linalg.norm(state.n, axis=1), 0, 1)))
    print(f"H={H:4.1f}: {state.steps:4d} steps, E={e.total:+.4f}, splay={e.splay:.3e}, "
          f"twist={e.twist:.3e}, bend={e.bend:.3e}, max tilt {tilt.max():.1f} deg")
