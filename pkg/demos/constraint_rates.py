"""Unit-length violation of the projection-free flow versus the time step.

At fixed h the violation err_1 = ||I_h[|n|^2 - 1]||_L1 shrinks linearly in
tau while the number of steps grows like 1/tau.  The default sweep uses a
coarse ball so it runs in well under a minute.
"""
# %%
import numpy as np

from frankoseen.scenarios import get_preset, run_scenario

h = 0.25
taus = [2.0 ** -l for l in range(1, 4)]
rows = []
for tau in taus:
    rep = run_scenario(get_preset("helein").with_overrides(h=h, tau=tau))
    rows.append((tau, rep.err1, rep.err_inf, rep.iterations))
    print(f"tau={tau:<8g} err_1={rep.err1:.3e} err_inf={rep.err_inf:.3e} steps={rep.iterations}")

# %%
tau, e1, einf, steps = map(np.array, zip(*rows))
print("slope of err_1 in tau:  %.2f" % np.polyfit(np.log(tau), np.log(e1), 1)[0])
print("slope of steps in tau:  %.2f" % np.polyfit(np.log(tau), np.log(steps), 1)[0])
