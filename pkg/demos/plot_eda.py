"""
Exploring the bundled heart records
===================================

Load the 500-record fixture, clean it and look at the class balance and the
two cross-tabulations the report writes as CSV.
"""

from chd.data import clean, eda_report, load_heart_fixture

###############################################################################
# Cleaning imputes missing values (median for numeric columns, mode for
# categorical ones) and drops exact duplicates.

raw = load_heart_fixture()
data = clean(raw)
print(len(raw), "raw records,", len(data), "after cleaning")

###############################################################################
# About a quarter of the records carry the disease label.

eda = eda_report(data)
print(eda.to_text())

###############################################################################
# The same numbers in machine-readable form.

print(eda.to_kv())
