"""Split ratios for the three pedestrian datasets from their published image counts.

Two cells come out one unit off in the third decimal compared with the
published table; the exact fractions are printed so the difference is visible.

Run: python3 demos/03_split_ratios.py
"""
from wildface.dataset_builder import ratio_report_from_counts, ratios_to_csv

counts = {
    "PETA": (11400, 7600, 4318, 2918),
    "PA-100K": (90000, 10000, 34128, 3539),
    "RAP": (33268, 8317, 11275, 2880),
}
reports = [ratio_report_from_counts(name, *c) for name, c in counts.items()]
print(ratios_to_csv(reports))

for r in reports:
    print(r.dataset)
    for field in r.RATIO_FIELDS:
        exact = getattr(r, field)
        print("  %-20s %-12s %.6f" % (field, exact, float(exact)))
