"""Spectral features: normalised differences and the candidate pool.

Run: python3 demos/01_spectral_features.py
"""

# %% [markdown]
# A candidate model term is either a raw band value or a normalised
# difference (a - b) / (a + b) between two bands of the same date. With two
# dates the pool doubles, because every term can come from either epoch.

# %%
import numpy as np

from agbchange.features import TermSpec, enumerate_terms, ndi

nir = np.array([0.30, 0.42, 0.25, 0.0])
swir = np.array([0.15, 0.12, 0.25, 0.0])
values, degenerate = ndi(nir, swir, return_degenerate=True)
print("ndi:", values)
print("a + b == 0 at:", np.flatnonzero(degenerate))  # defined as 0 there

# %% [markdown]
# Ten bands give 45 band pairs. Together with the 10 raw bands that makes
# 55 single-date terms and 110 terms over two dates.

# %%
bands = ["B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B11", "B12"]
uni = enumerate_terms(bands, "uni_temporal")
bi = enumerate_terms(bands, "bi_temporal")
print(len(uni), "single-date terms;", len(bi), "two-date terms")
print("first few:", [t.name for t in bi[:4]])

# %% [markdown]
# Term names round-trip through `TermSpec.parse`, which is how fitted
# models are stored and reloaded.

# %%
term = TermSpec.parse("ndi(B7,B12)@t2")
print(term, term.to_dict())
print("evaluated:", term.evaluate({("t2", "B7"): np.array([0.3]), ("t2", "B12"): np.array([0.1])}))
