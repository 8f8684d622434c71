"""Why duration-normalised labels stop seeing interest once a video is finished.

Synthetic logs are drawn from the censored interest model. For a fixed
duration the watch-time histogram piles up at both ends, and every complete
play gets the same completion-ratio label whatever the viewer's interest.
"""
import numpy as np
from scipy import stats

from cwm import objective as O
from cwm import records as R
from cwm import synth

ds, gt = synth.generate(synth.wechat_like(seed=0, durations=(30,), n_records=10_000, sigma_true=5.0))
counts, edges = synth.fixed_duration_histogram(ds.watch_times(), ds.durations(), 30.0, 20)
print("watch-time histogram at d = 30 s (20 bins):")
for lo, n in zip(edges[:-1], counts):
    print(f"  {lo:5.1f}s {'#' * int(60 * n / counts.max())} {n}")

ds, gt = synth.generate(synth.wechat_like(seed=0))
print("\ncomplete ratio:", round(R.stats(ds).mean_complete_ratio, 3))
w, d = ds.watch_times(), ds.durations()
for dur in (10.0, 30.0, 59.0):
    m = (w >= d) & (d == dur)
    labels = O.pcr_label(w[m], d[m])
    print(f"  d={dur:4.0f}s: {m.sum():5d} complete plays, completion label variance {np.var(labels):.1f}, "
          f"true interest std {np.std(gt.true_r[m]):.3f}")

# The interest hidden behind completion still tracks the features:
m = (w >= d) & (d == 10.0)
rho = stats.spearmanr(gt.true_score[m], gt.true_r[m])[0]
print(f"\nSpearman(true score, true interest) among 10 s complete plays: {rho:.3f}")
