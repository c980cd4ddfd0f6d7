"""A small end-to-end run: data, ensemble, three students, evaluation.

Uses a reduced version of configs/acceptance.yaml (about a minute on one
core) and prints the result tables. Pass a different YAML path to use it
instead.

    python demos/end_to_end.py [config.yaml]
"""

import sys
import time

from seqendd import pipeline as pl
from seqendd.metrics import spearman_rank

overrides = {
    "output_dir": "runs/demo",
    "data.n_train": 1500,
    "data.n_test": 200,
    "data.n_ood": 200,
    "ensemble_size": 3,
    "members.epochs": 6,
    "students.epochs": 6,
}
path = sys.argv[1] if len(sys.argv) > 1 else "configs/acceptance.yaml"
config = pl.load_config(path, overrides if len(sys.argv) == 1 else {})

start = time.perf_counter()
run = pl.run_experiment(config, log_dir=config.root / "logs")
print(f"pipeline finished in {time.perf_counter() - start:.0f}s\n")

ev = run.evaluation
print(pl.gleu_table(ev).text())
print(pl.uncertainty_table(ev).text())
print(pl.auc_rr_table(ev).text())
print(pl.reject_table(ev).text())

ens_tu, kl_tu = pl.teacher_forced_tu(run.ensemble, run.students["kl"], run.corpora["test_id"])
print(f"token TU rank correlation, KL student vs ensemble: {spearman_rank(ens_tu, kl_tu):.3f}")
