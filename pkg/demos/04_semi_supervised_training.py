"""Supervised baseline against consistency training with augmented views.

Uses the acceptance benchmark (3,000 nodes, 10% labelled) with one seed and
takes a couple of minutes on one CPU. Run with
``python3 demos/04_semi_supervised_training.py``.
"""

import time

from hgmda.benchmark import baseline_config, benchmark_config, run_seed

for name, config in [("supervised only", baseline_config(seed=0)),
                     ("consistency + exchange/add/remove views", benchmark_config(seed=0))]:
    start = time.perf_counter()
    scores, result = run_seed(config, cluster=True)
    print(f"{name}: best epoch {result.best_epoch}, test macro-F1 {scores.macro_f1:.3f}, "
          f"micro-F1 {scores.micro_f1:.3f}, NMI {scores.nmi:.3f}, ARI {scores.ari:.3f} "
          f"({time.perf_counter() - start:.0f}s)")
    print("  last epochs:")
    for line in result.metrics_log().splitlines()[-3:]:
        print("   ", line)
