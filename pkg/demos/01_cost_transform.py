"""Interest, watch cost and the watch time a viewer would choose.

A viewer with interest r in (0, 1) gains log(t + 1) / (-log r) from watching
t seconds and pays c per second. The best stopping point has a closed form,
and pushing interest through the normal quantile gives a regression label.
"""
import math

import numpy as np

from cwm import synth
from cwm import transform as T

c = 1 / 40

print("interest -> counterfactual watch time (c = 1/40)")
for r in (0.05, 0.2, math.exp(-1), 0.5, 0.8, 0.9):
    closed = max(T.cwt_from_interest(r, c), 0.0)
    grid = synth.argmax_utility(r, c, step=0.01)
    print(f"  r={r:.3f}  closed form {closed:8.2f} s   grid argmax {grid:8.2f} s")

# The transform is the maximiser of the utility curve; plot-ready values:
t = np.array([0, 10, 20, 39, 60, 100], dtype=float)
print("\nutility along t for r = 1/e:", np.round(synth.utility(t, math.exp(-1), c), 4))

print("\nwatch time -> probit label")
for w in (0, 5, 19, 30, 60):
    print(f"  w={w:3d}s  r={T.interest_from_cwt(w, c):.3e}  label={T.probit_label(w, c):+.4f}")

# Inference maps a probit-space score back to a clipped watch time.
print("\nscore -> predicted watch time for a 30 s video")
for s in (-3, -1.1015, 0, 2):
    print(f"  score {s:+.4f} -> {T.predict_watch_time(s, c, 30.0):6.2f} s")
