"""Total, data and knowledge uncertainty for a few hand-picked cases.

Two ensembles predict over three classes: one whose members agree on a
flat distribution (high data uncertainty, no knowledge uncertainty) and one
whose members are each confident but disagree (mostly knowledge uncertainty).
A Dirichlet fitted to many draws from each reproduces the same split.

    python demos/uncertainty_decomposition.py
"""

import numpy as np

from seqendd import dirmath as dm


def show(name, triple):
    print(f"{name:<28} TU {float(triple.total):.4f}  DU {float(triple.data):.4f}  KU {float(triple.knowledge):.4f}")


agree = np.array([[0.34, 0.33, 0.33]] * 5)
disagree = np.array([[0.96, 0.02, 0.02], [0.02, 0.96, 0.02], [0.02, 0.02, 0.96],
                     [0.96, 0.02, 0.02], [0.02, 0.96, 0.02]])
show("agreeing flat members", dm.ensemble_uncertainties(agree))
show("confident, disagreeing", dm.ensemble_uncertainties(disagree))

# A Dirichlet summarises the whole ensemble with one concentration vector.
rng = np.random.default_rng(0)
for name, alpha in (("sharp Dirichlet [90, 90, 90]", [90.0, 90.0, 90.0]), ("flat Dirichlet [0.3, 0.3, 0.3]", [0.3, 0.3, 0.3])):
    show(name, dm.mutual_information(alpha))
    members = rng.dirichlet(alpha, size=20_000)
    fit = dm.dirichlet_mle_fit(members)
    show("  ensemble of 20k draws", dm.ensemble_uncertainties(members))
    print(f"  refitted alpha {np.round(fit.alpha, 3)}")

# Tempering flattens every member, which raises data uncertainty and lowers knowledge uncertainty.
for t in (1.0, 3.0, 10.0):
    show(f"disagreeing at T={t:g}", dm.ensemble_uncertainties(dm.temper_categorical(disagree, t)))
