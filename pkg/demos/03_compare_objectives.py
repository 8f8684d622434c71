"""Train every objective on two synthetic logs and compare them.

The low-completion log has long-tailed durations; the high-completion log
has short videos. Interest AUC is scored against the generator's own
interest values, which real logs never expose.
"""
import sys

import numpy as np

from cwm import backbone as B
from cwm import metrics as M
from cwm import objective as O
from cwm import records as R
from cwm import synth

seeds = range(int(sys.argv[1]) if len(sys.argv) > 1 else 2)
methods = ("cwm", "vr", "pcr", "wtg", "d2q")

for title, maker in (("low completion (long videos)", synth.kuairand_like),
                     ("high completion (short videos)", synth.wechat_like)):
    table = {m: [] for m in methods}
    for seed in seeds:
        ds, gt = synth.generate(maker(seed=seed))
        t1, t2 = R.split_points(ds)
        train, val, test = R.temporal_split(ds, t1, t2)
        ts = ds.timestamps()
        truth = gt.true_r[ts >= t2] >= np.quantile(gt.true_r[ts < t1], 0.7)
        for m in methods:
            obj = O.make_objective(m)
            model = B.train(train, val, obj, "fm", B.TrainConfig(seed=seed)).model
            s = model.score(test.encode(train.vocab))
            wp = obj.predict_watch_time(s, test.durations())
            table[m].append((M.auc(s, truth), M.mae(wp, test.watch_times()),
                             M.xauc(wp, test.watch_times())))
    print(f"\n{title}, complete ratio {R.stats(ds).mean_complete_ratio:.3f}")
    print("  method  interest-AUC     MAE    XAUC")
    for m in methods:
        a, e, x = np.mean(table[m], axis=0)
        print(f"  {m:6s}  {a:12.4f}  {e:6.2f}  {x:.4f}")
