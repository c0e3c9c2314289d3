"""Resolution, luminosity and blurriness of a few synthetic images, then
pooled min-max statistics across two made-up datasets.

Run: python3 demos/02_image_quality.py
"""
import numpy as np

from wildface.image_quality import blurriness, dataset_stats, luminosity, quality_record, stats_to_csv

rng = np.random.default_rng(0)

flat = np.full((64, 32, 3), 128, dtype=np.uint8)
noise = rng.integers(0, 256, (64, 32, 3), dtype=np.uint8)
red = np.zeros((8, 8, 3), dtype=np.uint8)
red[..., 0] = 255

print("flat grey   luminosity %.5f  blur %.1f" % (luminosity(flat), blurriness(flat)))
print("noise       luminosity %.5f  blur %.1f" % (luminosity(noise), blurriness(noise)))
print("pure red    luminosity %.5f  (sqrt(0.299) = %.5f)" % (luminosity(red), np.sqrt(0.299)))

# a smoothed copy is much less sharp
smooth = noise.astype(float)
smooth = (smooth + np.roll(smooth, 1, 0) + np.roll(smooth, 1, 1) + np.roll(smooth, (1, 1), (0, 1))) / 4
print("smoothed    blur %.1f" % blurriness(smooth.astype(np.uint8)))

small = [quality_record(f"s{i}", rng.integers(0, 256, (24, 12, 3), dtype=np.uint8)) for i in range(5)]
large = [quality_record(f"l{i}", rng.integers(0, 120, (96, 48, 3), dtype=np.uint8)) for i in range(5)]
stats = dataset_stats({"small": small, "large": large})
print()
print(stats_to_csv(stats))
