"""Walkthrough: the classical merging baselines on small tensors.

Plain residual addition, random drop-and-rescale, trim/elect-sign/average,
and the two-sided magnitude filter, all over the same aligned-triple
plumbing as the column-wise merge.
"""

import numpy as np

from dimerge import BaselineParams, MergeConfig, breadcrumbs_transform, dare_transform, task_arithmetic, ties_merge
from dimerge.align import AlignedTriple
from dimerge.records import TensorRecord

rng = np.random.default_rng(3)


def triple(base, ml, mm):
    return AlignedTriple(
        "toy",
        TensorRecord.from_array("toy", np.asarray(base, dtype=np.float32)),
        TensorRecord.from_array("toy", np.asarray(ml, dtype=np.float32)),
        TensorRecord.from_array("toy", np.asarray(mm, dtype=np.float32)),
    )


base = np.zeros(6, dtype=np.float32)
ml = np.array([1.0, -2.0, 0.3, 0.0, 0.8, -0.1], dtype=np.float32)
mm = np.array([1.0, 1.0, -0.3, 0.0, 0.2, -0.1], dtype=np.float32)
t = triple(base, ml, mm)

print("task arithmetic:", task_arithmetic(t, lam=1.0).to_f32())

# TIES at full density: coordinate 1 conflicts; the larger mass (-2) wins
print("ties merge:     ", ties_merge(t, density=1.0, lam=1.0).to_f32())

# DARE drops elements at random but stays unbiased in expectation
delta = TensorRecord.from_array("delta", np.ones(10_000, dtype=np.float32))
dropped = dare_transform(delta, p=0.9, seed=0).to_f32()
print(f"\nDARE p=0.9: kept {np.count_nonzero(dropped)} of {dropped.size}, "
      f"mean {dropped.mean():.3f} (unbiased, stays near 1.0)")

# masks are keyed by (seed, name, index): identical keys, identical masks
again = dare_transform(delta, p=0.9, seed=0).to_f32()
print("deterministic mask:", np.array_equal(dropped, again))

# breadcrumbs keeps the middle of the magnitude distribution
spread = TensorRecord.from_array("d", rng.normal(size=12).astype(np.float32))
kept = breadcrumbs_transform(spread, beta=0.25, gamma=0.25).to_f32()
print("\nbreadcrumbs input: ", np.round(spread.to_f32(), 3))
print("breadcrumbs output:", np.round(kept, 3))

# defaults travel with MergeConfig for whole-checkpoint runs
cfg = MergeConfig(method="ties", baseline=BaselineParams(ties_density=0.3)).validate()
print("\ncheckpoint-level config:", cfg.to_dict()["baseline"])
