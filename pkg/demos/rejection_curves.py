"""Rejection curves on a toy correction set.

Sentences are handed to an oracle in order of some score; corpus GLEU rises
to 1.0 as more are rejected. A good score rejects the worst sentences first.
The curves are written to demos_out/ as CSV files and one SVG.

    python demos/rejection_curves.py
"""

from pathlib import Path

import numpy as np

from seqendd import metrics as mt
from seqendd import pipeline as pl
from seqendd import synthdata as sd

out = Path("demos_out")
config = sd.GrammarConfig(seed=11)
pairs = sd.generate_corpus(config, 300)
rng = np.random.default_rng(0)

# a pretend system: fixes each sentence with probability 0.6
sentences = [mt.ScoredSentence(p.source, p.reference, p.reference if rng.random() < 0.6 else p.source)
             for p in pairs]
print(f"base corpus GLEU {mt.gleu_corpus(sentences):.4f}")

manual = mt.rejection_curve(sentences, [mt.manual_score(s) for s in sentences])
random_auc = mt.random_rejection_auc(sentences)
rankings = {
    "manual": [mt.manual_score(s) for s in sentences],
    "length": [s.length for s in sentences],
    # a noisy estimate of how wrong the hypothesis is
    "noisy": [mt.manual_score(s) + rng.normal(scale=2.0) for s in sentences],
    "shuffled": list(rng.permutation(len(sentences))),
}
curves = {}
for name, scores in rankings.items():
    curve = mt.rejection_curve(sentences, scores)
    rr = mt.auc_rr(curve, manual, random_auc)
    curves[name] = curve
    pl.write_curve(out / f"{name}.csv", curve, rr)
    print(f"{name:<9} AUC {curve.auc:.4f}  AUC_RR {rr:+.3f}  GLEU@10% {mt.rejection_at(sentences, scores):.4f}")

curves["random"] = mt.random_rejection_curve(sentences)
(out / "curves.svg").write_text(pl.curves_svg(curves))
print(f"wrote {out}/*.csv and {out}/curves.svg")
