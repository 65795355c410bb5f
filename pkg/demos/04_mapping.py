"""Applying a change model to every forest pixel.

Run: python3 demos/04_mapping.py
"""

# %% [markdown]
# A fitted model is evaluated pixel by pixel from the band rasters of both
# dates. Pixels outside the forest mask, or with nodata in any band, are
# written as -9999. Predictions are never clipped; instead the run reports
# how many pixels have a term outside the range seen in the training plots.

# %%
import numpy as np

from agbchange.data_ingest import RasterStack, read_raster, write_raster
from agbchange.features import TermSpec
from agbchange.map_prediction import predict_map, synthetic_mean_for_estimator
from agbchange.subset_selection import ModelFit

rng = np.random.default_rng(11)
shape = (6, 8)


def stack(label, **bands):
    arrays = {k: v.astype("<f4") for k, v in bands.items()}
    return RasterStack(shape[1], shape[0], 500000.0, 6700000.0, 10.0, -9999.0, arrays, label)


t1 = stack("t1", B7=rng.uniform(0.2, 0.35, shape), B12=rng.uniform(0.08, 0.15, shape))
t2 = stack("t2", B7=rng.uniform(0.2, 0.35, shape), B12=rng.uniform(0.08, 0.2, shape))
t2.bands["B12"][0, 0] = -9999.0  # a cloud
mask = stack("mask", mask=(rng.random(shape) < 0.7).astype(float))

terms = [TermSpec("ndi", "t1", "B7", "B12"), TermSpec("ndi", "t2", "B7", "B12")]
model = ModelFit("bi_temporal", terms, -79.86, [-137.32, 284.0], training_ranges=[(0.2, 0.55), (0.15, 0.55)])

dmap, stats = predict_map(model, [t1, t2], mask, workers=2)
np.set_printoptions(suppress=True, linewidth=100)
print(np.round(dmap.bands["dagb"], 1))
for key, value in stats.to_dict().items():
    print(f"  {key}: {value}")

# %% [markdown]
# Two ways to turn the map into a mean for the MA estimator. The default
# spreads the forest sum over every usable pixel (non-forest counts as 0);
# the other averages over forest pixels only.

# %%
for accounting in ("population_mean", "forest_mean"):
    print(accounting, round(synthetic_mean_for_estimator(stats, accounting), 3))

# %% [markdown]
# Maps are written in the BGRID format and read back bit for bit.

# %%
blob = write_raster(dmap)
print(blob.split(b"\n")[:5])
assert write_raster(read_raster(blob)) == blob
