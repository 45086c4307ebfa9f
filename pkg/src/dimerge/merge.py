"""Column-wise direction- and magnitude-aware merging of two residuals.

For each in-scope 2D backbone tensor the engine forms the multilingual and
multimodal residuals against the shared base, measures how strongly and how
differently each source rewrites every column, turns those deviations into
per-column weights on the 2-simplex, and composes::

    merged[:, j] = base[:, j] + w_ml[j] * delta_ml[:, j] + w_mm[j] * delta_mm[:, j]

1D parameters use absolute element deviations and element-wise weights. All
other anchor tensors (vision encoder, projector, out-of-scope keys) are
copied from the anchor verbatim.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .align import AlignedTriple, align_triple
from .baselines import BaselineParams, merge_baseline_values
from .errors import ConfigError, ShapeError
from .geometry import EPSILON_DEFAULT, decompose, direction_deviation, magnitude_deviation
from .records import DType, TensorRecord, f32_to_bf16_bits
from .salience import (
    AggregationKind,
    EstimatorKind,
    SalienceWeights,
    aggregate_branches,
    elementwise_salience,
    estimate_salience,
)
from .scope import ScopeFilter
from .store import Checkpoint, Role

BASELINE_METHODS = ("task_arithmetic", "dare", "ties", "breadcrumbs")
MERGE_METHODS = ("dim3",) + BASELINE_METHODS


@dataclass(frozen=True)
class MergeConfig:
    """Full declarative description of a merge run."""

    method: str = "dim3"
    estimator: EstimatorKind = EstimatorKind.RANK
    aggregation: AggregationKind = field(default_factory=AggregationKind.average)
    epsilon: float = EPSILON_DEFAULT
    scope: ScopeFilter = field(default_factory=ScopeFilter.full)
    shape_policy: str = "strict"
    seed: int = 0
    baseline: BaselineParams | None = None
    output_dtype: str = "match_anchor"   # or "f32"
    high_rank: str = "reject"            # or "pass_through"

    def validate(self) -> "MergeConfig":
        if self.method not in MERGE_METHODS:
            raise ConfigError(f"unknown merge method {self.method!r}")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.output_dtype not in ("match_anchor", "f32"):
            raise ConfigError(f"unknown output dtype {self.output_dtype!r}")
        if self.method == "dim3" and self.baseline is not None:
            raise ConfigError("baseline parameters are only valid for baseline methods")
        if self.method in BASELINE_METHODS and self.baseline is None:
            object.__setattr__(self, "baseline", BaselineParams())
        return self

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "estimator": self.estimator.value,
            "aggregation": self.aggregation.to_dict(),
            "epsilon": self.epsilon,
            "scope": self.scope.to_dict(),
            "shape_policy": self.shape_policy,
            "seed": self.seed,
            "baseline": self.baseline.to_dict() if self.baseline else None,
            "output_dtype": self.output_dtype,
            "high_rank": self.high_rank,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MergeConfig":
        baseline = data.get("baseline")
        cfg = cls(
            method=data.get("method", "dim3"),
            estimator=EstimatorKind(data.get("estimator", "rank")),
            aggregation=AggregationKind.from_dict(data.get("aggregation", "average")),
            epsilon=float(data.get("epsilon", EPSILON_DEFAULT)),
            scope=ScopeFilter.from_dict(data.get("scope", {"preset": "full"})),
            shape_policy=data.get("shape_policy", "strict"),
            seed=int(data.get("seed", 0)),
            baseline=BaselineParams.from_dict(baseline) if baseline is not None else None,
            output_dtype=data.get("output_dtype", "match_anchor"),
            high_rank=data.get("high_rank", "reject"),
        )
        return cfg.validate()


@dataclass
class TensorMergeReport:
    name: str
    action: str                 # "merged" | "pass_through"
    method: str | None = None
    reason: str | None = None   # pass-through classification
    omega_ml_mean: float | None = None
    omega_ml_min: float | None = None
    omega_ml_max: float | None = None
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass
class MergeReport:
    tensors: list[TensorMergeReport] = field(default_factory=list)
    merged_count: int = 0
    pass_through_count: int = 0
    mean_omega_ml: float | None = None
    seconds: float = 0.0
    config: dict = field(default_factory=dict)
    alignment: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "summary": {
                "merged_count": self.merged_count,
                "pass_through_count": self.pass_through_count,
                "mean_omega_ml": self.mean_omega_ml,
                "seconds": self.seconds,
            },
            "config": self.config,
            "alignment": self.alignment,
            "tensors": [t.to_dict() for t in self.tensors],
        }


def column_weights(
    base: np.ndarray, ml: np.ndarray, mm: np.ndarray, cfg: MergeConfig
) -> SalienceWeights:
    """Per-column source weights for a 2D tensor from both deviation branches."""
    dec_base = decompose(base, cfg.epsilon)
    dec_ml = decompose(ml, cfg.epsilon)
    dec_mm = decompose(mm, cfg.epsilon)
    s_mag_ml, _ = estimate_salience(
        magnitude_deviation(dec_ml, dec_base), magnitude_deviation(dec_mm, dec_base), cfg.estimator
    )
    s_dir_ml, _ = estimate_salience(
        direction_deviation(dec_ml, dec_base), direction_deviation(dec_mm, dec_base), cfg.estimator
    )
    return aggregate_branches(s_mag_ml, s_dir_ml, cfg.aggregation)


def _dim3_2d(triple: AlignedTriple, cfg: MergeConfig) -> tuple[np.ndarray, SalienceWeights]:
    base = triple.base.to_f32()
    ml = triple.ml.to_f32()
    mm = triple.mm.to_f32()
    weights = column_weights(base, ml, mm, cfg)
    w_ml = weights.omega_ml.astype(np.float32)
    w_mm = weights.omega_mm.astype(np.float32)
    merged = base + w_ml[None, :] * (ml - base) + w_mm[None, :] * (mm - base)
    return merged, weights


def _dim3_1d(triple: AlignedTriple, cfg: MergeConfig) -> tuple[np.ndarray, SalienceWeights]:
    base = triple.base.to_f32()
    ml = triple.ml.to_f32()
    mm = triple.mm.to_f32()
    dev_ml = np.abs(ml.astype(np.float64) - base.astype(np.float64))
    dev_mm = np.abs(mm.astype(np.float64) - base.astype(np.float64))
    weights = elementwise_salience(dev_ml, dev_mm, cfg.estimator)
    merged = (
        base
        + weights.omega_ml.astype(np.float32) * (ml - base)
        + weights.omega_mm.astype(np.float32) * (mm - base)
    )
    return merged, weights


def _output_dtype(triple: AlignedTriple, cfg: MergeConfig) -> DType:
    return triple.mm.dtype if cfg.output_dtype == "match_anchor" else DType.F32


def merge_matrix(triple: AlignedTriple, cfg: MergeConfig) -> TensorRecord:
    """Column-wise merge of one 2D tensor; output in the anchor's dtype."""
    if triple.rank != 2:
        raise ShapeError(f"{triple.name}: merge_matrix needs a 2D tensor, got {triple.shape}")
    merged, _ = _dim3_2d(triple, cfg)
    return TensorRecord.from_array(triple.name, merged, dtype=_output_dtype(triple, cfg))


def merge_vector(triple: AlignedTriple, cfg: MergeConfig) -> TensorRecord:
    """Element-wise merge of one 1D tensor; output in the anchor's dtype."""
    if triple.rank != 1:
        raise ShapeError(f"{triple.name}: merge_vector needs a 1D tensor, got {triple.shape}")
    merged, _ = _dim3_1d(triple, cfg)
    return TensorRecord.from_array(triple.name, merged, dtype=_output_dtype(triple, cfg))


def _merge_values(triple: AlignedTriple, cfg: MergeConfig) -> tuple[np.ndarray, SalienceWeights | None]:
    if cfg.method == "dim3":
        if triple.rank == 2:
            return _dim3_2d(triple, cfg)
        return _dim3_1d(triple, cfg)
    base = triple.base.to_f32()
    d_ml = triple.ml.to_f32() - base
    d_mm = triple.mm.to_f32() - base
    values = merge_baseline_values(cfg.method, base, d_ml, d_mm, cfg.baseline, cfg.seed, triple.name)
    return values, None


def _embed_into_anchor(anchor: TensorRecord, merged: np.ndarray, out_dtype: DType) -> TensorRecord:
    """Write merged values into the anchor tensor, keeping any region outside
    the merged sub-block bit-identical (anchor-overlap shape policy)."""
    region = tuple(slice(0, d) for d in merged.shape)
    if out_dtype is anchor.dtype:
        bits = anchor.bits().copy()
        if out_dtype is DType.BF16:
            bits[region] = f32_to_bf16_bits(merged)
        else:
            sub = TensorRecord.from_array(anchor.name, merged, dtype=out_dtype)
            bits[region] = sub.bits()
        return TensorRecord(name=anchor.name, dtype=out_dtype, shape=anchor.shape, raw=bits.tobytes())
    full = anchor.to_f32() if out_dtype is not DType.F64 else anchor.to_f64()
    full[region] = merged
    return TensorRecord.from_array(anchor.name, full, dtype=out_dtype)


def _merge_one(triple: AlignedTriple, anchor_rec: TensorRecord, cfg: MergeConfig) -> tuple[TensorRecord, TensorMergeReport]:
    start = time.perf_counter()
    values, weights = _merge_values(triple, cfg)
    out_dtype = _output_dtype(triple, cfg)
    if triple.shape == anchor_rec.shape:
        record = TensorRecord.from_array(triple.name, values, dtype=out_dtype)
    else:
        record = _embed_into_anchor(anchor_rec, values, out_dtype)
    entry = TensorMergeReport(name=triple.name, action="merged", method=cfg.method)
    if weights is not None:
        entry.omega_ml_mean = float(weights.omega_ml.mean())
        entry.omega_ml_min = float(weights.omega_ml.min())
        entry.omega_ml_max = float(weights.omega_ml.max())
    entry.seconds = time.perf_counter() - start
    return record, entry


def merge_checkpoint(
    base: Checkpoint,
    ml: Checkpoint,
    anchor: Checkpoint,
    cfg: MergeConfig,
    threads: int | None = None,
) -> tuple[Checkpoint, MergeReport]:
    """Merge the shared backbone into the anchor; everything else passes
    through bit-exactly. Output is identical for any worker count."""
    cfg.validate()
    triples, alignment = align_triple(
        base, ml, anchor, scope=None, shape_policy=cfg.shape_policy, high_rank=cfg.high_rank
    )
    by_name = {t.name: t for t in triples}

    start = time.perf_counter()
    passthrough_reason = {}
    for reason, names in (
        ("anchor_only", alignment.anchor_only),
        ("missing_from_source", alignment.missing_from_base + alignment.missing_from_ml),
        ("high_rank", alignment.high_rank),
    ):
        for n in names:
            passthrough_reason[n] = reason

    def handle(name: str) -> tuple[TensorRecord, TensorMergeReport]:
        anchor_rec = anchor[name]
        triple = by_name.get(name)
        if triple is None:
            return anchor_rec, TensorMergeReport(
                name=name, action="pass_through", reason=passthrough_reason.get(name, "unaligned")
            )
        if not cfg.scope.admits(name):
            return anchor_rec, TensorMergeReport(name=name, action="pass_through", reason="out_of_scope")
        if triple.rank == 0:
            return anchor_rec, TensorMergeReport(name=name, action="pass_through", reason="scalar")
        return _merge_one(triple, anchor_rec, cfg)

    names = anchor.names()
    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(handle, names))
    else:
        results = [handle(n) for n in names]

    records = []
    report = MergeReport(config=cfg.to_dict(), alignment=alignment.to_dict())
    omega_means = []
    for record, entry in results:
        records.append(record)
        report.tensors.append(entry)
        if entry.action == "merged":
            report.merged_count += 1
            if entry.omega_ml_mean is not None:
                omega_means.append(entry.omega_ml_mean)
        else:
            report.pass_through_count += 1
    report.mean_omega_ml = float(np.mean(omega_means)) if omega_means else None
    report.seconds = time.perf_counter() - start

    merged_ckpt = Checkpoint.from_records(records, role=Role.MERGED, source_path="")
    return merged_ckpt, report
