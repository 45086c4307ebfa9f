"""Walkthrough: column geometry of weight residuals.

Each weight-matrix column splits into a norm (how big) and a unit direction
(which way). Two fine-tunes of the same base can then be compared column by
column: how much did each one rescale a column, and how far did it rotate
it? The squared distance between a fine-tuned column and its base column
decomposes exactly into those two effects, which is worth seeing once with
numbers.
"""

import numpy as np

from dimerge import (
    cross_alignment,
    decompose,
    direction_deviation,
    magnitude_deviation,
    residual_identity_terms,
)

rng = np.random.default_rng(1)

base = rng.normal(size=(64, 6)).astype(np.float32)
ml = base + rng.normal(scale=0.3, size=base.shape).astype(np.float32)   # "multilingual" update
mm = base + rng.normal(scale=0.1, size=base.shape).astype(np.float32)   # "multimodal" update

# --- decomposition ---------------------------------------------------------
dec_base = decompose(base)
print("column norms of the base:", np.round(dec_base.magnitudes, 3))
unit = np.linalg.norm(dec_base.directions, axis=0)
print("direction norms (unit up to the stabilizer):", np.round(unit, 6))

# --- per-column deviations ---------------------------------------------------
dec_ml, dec_mm = decompose(ml), decompose(mm)
print("\nnorm gap   ml vs base:", np.round(magnitude_deviation(dec_ml, dec_base), 4))
print("norm gap   mm vs base:", np.round(magnitude_deviation(dec_mm, dec_base), 4))
print("reorient   ml vs base:", np.round(direction_deviation(dec_ml, dec_base), 4))
print("reorient   mm vs base:", np.round(direction_deviation(dec_mm, dec_base), 4))

# the stronger update (ml, scale 0.3) rotates columns further than mm

# --- how aligned are the two updates with each other? -----------------------
cos = cross_alignment(ml - base, mm - base)
print("\ncross-residual cosine per column:", np.round(cos, 4))
print("(independent random updates hover near zero)")

# --- the exact radial/angular split ------------------------------------------
j = 0
lhs, rhs = residual_identity_terms(ml[:, j].astype(np.float64), base[:, j].astype(np.float64))
print(f"\ncolumn {j}: direct squared distance   = {lhs:.12f}")
print(f"column {j}: norm-gap + rotation terms  = {rhs:.12f}")
print(f"relative gap: {abs(lhs - rhs) / lhs:.2e}")
