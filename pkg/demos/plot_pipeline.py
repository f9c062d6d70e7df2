"""
The whole pipeline from Python
==============================

What ``chd run`` does, step by step: load, clean, split, rank features on
the training part, fit, evaluate and write the report directory.
"""

import tempfile

from chd.pipeline import PipelineConfig, emit_report, run_pipeline

cfg = PipelineConfig(top=8, classifiers=("naive_bayes", "logistic_regression", "random_forest"))
report = run_pipeline(cfg)
print(report.selected)

###############################################################################
# Timings live on the report but never in the written files, so two runs of
# the same configuration produce identical directories.

print(sorted(report.timings))
with tempfile.TemporaryDirectory() as out:
    for path in emit_report(report, out):
        print(path.name)
