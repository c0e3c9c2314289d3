"""Mean accuracy for a binary attribute and the relative error reduction between two models.

Run: python3 demos/05_metrics.py
"""
import numpy as np

from wildface.eval_metrics import confusion, error_reduction, format_percent, mean_accuracy

rng = np.random.default_rng(5)
labels = rng.integers(0, 2, 500)
# a classifier that is right 90% of the time on positives, 80% on negatives
flip = np.where(labels == 1, rng.random(500) < 0.1, rng.random(500) < 0.2)
preds = np.where(flip, 1 - labels, labels)

conf = confusion(preds.tolist(), labels.tolist())
print(conf)
print("mA = %.4f" % mean_accuracy(conf))

# plain accuracy hides the class imbalance, mA does not
skewed = [0] * 90 + [1] * 10
always_zero = [0] * 100
print("accuracy of 'always 0' on 90/10 labels: 0.90, mA:", mean_accuracy(confusion(always_zero, skewed)))

for base, new in [(92.62, 93.45), (92.05, 92.79), (96.14, 97.07)]:
    r = error_reduction(base, new)
    print("%.2f -> %.2f : error reduced by %s%%  (raw %.4f)" % (base, new, format_percent(r), r))
