"""
Training and scoring the classifier roster
==========================================

Fit every model on the training partition and compare them on held-out data.
"""

from chd.data import clean, load_heart_fixture, stratified_split
from chd.metrics import metrics_csv
from chd.pipeline import CLASSIFIERS, DISPLAY_NAMES, evaluate_models

split = stratified_split(clean(load_heart_fixture()), ratio=0.8, seed=0)
print(len(split.train), "training records,", len(split.test), "held out")

###############################################################################
# Every model is deterministic for a fixed seed.

models = {name: fit(split.train, cfg()) for name, (fit, cfg) in CLASSIFIERS.items()}

###############################################################################
# Undefined ratios (for example precision with no positive predictions) are
# printed as a dash rather than dropped.

rows = evaluate_models(models, split.test)
print(metrics_csv([(DISPLAY_NAMES[n], r) for n, r in rows]))

###############################################################################
# The boosted trees record their training loss after every round.

print(models["gradient_boosted_tree"].loss_trace[:3])
