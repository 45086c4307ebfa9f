"""Three-way alignment of base, multilingual, and anchor checkpoints.

Alignment walks the anchor's key set: every anchor tensor ends up either in
an :class:`AlignedTriple` (shared backbone parameter, mergeable) or in the
report's pass-through list (vision encoder, projector, keys missing from a
source, high-rank tensors, out-of-scope keys). Nothing is dropped silently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import AlignmentError, ConfigError
from .records import TensorRecord
from .scope import ScopeFilter
from .store import Checkpoint

SHAPE_POLICIES = ("strict", "anchor-overlap")
HIGH_RANK_POLICIES = ("reject", "pass_through")


@dataclass(frozen=True)
class AlignedTriple:
    """Per-parameter alignment of (base, multilingual, anchor) tensors.

    All three records share one shape; under the anchor-overlap policy that
    shape is the common leading sub-block.
    """

    name: str
    base: TensorRecord
    ml: TensorRecord
    mm: TensorRecord

    def __post_init__(self):
        if not (self.base.shape == self.ml.shape == self.mm.shape):
            raise AlignmentError(
                f"{self.name}: aligned shapes differ "
                f"{self.base.shape} / {self.ml.shape} / {self.mm.shape}"
            )

    @property
    def shape(self) -> tuple[int, ...]:
        return self.mm.shape

    @property
    def rank(self) -> int:
        return len(self.mm.shape)


@dataclass
class ShapeMismatch:
    name: str
    base_shape: tuple[int, ...]
    ml_shape: tuple[int, ...]
    anchor_shape: tuple[int, ...]
    resolution: str                      # "overlap"
    overlap_shape: tuple[int, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "base_shape": list(self.base_shape),
            "ml_shape": list(self.ml_shape),
            "anchor_shape": list(self.anchor_shape),
            "resolution": self.resolution,
            "overlap_shape": list(self.overlap_shape) if self.overlap_shape else None,
        }


@dataclass
class AlignmentReport:
    aligned: list[str] = field(default_factory=list)
    pass_through: list[str] = field(default_factory=list)
    anchor_only: list[str] = field(default_factory=list)
    missing_from_base: list[str] = field(default_factory=list)
    missing_from_ml: list[str] = field(default_factory=list)
    out_of_scope: list[str] = field(default_factory=list)
    high_rank: list[str] = field(default_factory=list)
    shape_mismatches: list[ShapeMismatch] = field(default_factory=list)
    extra_in_base: list[str] = field(default_factory=list)
    extra_in_ml: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "aligned": self.aligned,
            "pass_through": self.pass_through,
            "anchor_only": self.anchor_only,
            "missing_from_base": self.missing_from_base,
            "missing_from_ml": self.missing_from_ml,
            "out_of_scope": self.out_of_scope,
            "high_rank": self.high_rank,
            "shape_mismatches": [m.to_dict() for m in self.shape_mismatches],
            "extra_in_base": self.extra_in_base,
            "extra_in_ml": self.extra_in_ml,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def _crop(rec: TensorRecord, shape: tuple[int, ...]) -> TensorRecord:
    if rec.shape == shape:
        return rec
    arr = rec.bits()
    sliced = arr[tuple(slice(0, d) for d in shape)]
    flat = bytes(sliced.tobytes())
    return TensorRecord(name=rec.name, dtype=rec.dtype, shape=shape, raw=flat)


def align_triple(
    base: Checkpoint,
    ml: Checkpoint,
    anchor: Checkpoint,
    scope: ScopeFilter | None = None,
    shape_policy: str = "strict",
    high_rank: str = "reject",
) -> tuple[list[AlignedTriple], AlignmentReport]:
    """Align the shared backbone of three remapped checkpoints.

    ``scope=None`` admits every shared key. Under the default strict shape
    policy any shape disagreement aborts; under ``anchor-overlap`` the common
    leading sub-block is aligned and the anchor's extra rows/columns pass
    through at assembly time.
    """
    if shape_policy not in SHAPE_POLICIES:
        raise ConfigError(f"unknown shape policy {shape_policy!r}")
    if high_rank not in HIGH_RANK_POLICIES:
        raise ConfigError(f"unknown high-rank policy {high_rank!r}")

    report = AlignmentReport()
    triples: list[AlignedTriple] = []

    for name, anchor_rec in anchor.tensors.items():
        in_base, in_ml = name in base, name in ml
        if not in_base and not in_ml:
            report.anchor_only.append(name)
            report.pass_through.append(name)
            continue
        if not in_base or not in_ml:
            if not in_base:
                report.missing_from_base.append(name)
            if not in_ml:
                report.missing_from_ml.append(name)
            report.pass_through.append(name)
            continue

        if scope is not None and not scope.admits(name):
            report.out_of_scope.append(name)
            report.pass_through.append(name)
            continue

        base_rec, ml_rec = base[name], ml[name]
        shapes = (base_rec.shape, ml_rec.shape, anchor_rec.shape)

        if anchor_rec.rank > 2 or base_rec.rank > 2 or ml_rec.rank > 2:
            if high_rank == "reject":
                raise AlignmentError(
                    f"{name}: rank-{anchor_rec.rank} tensor in the shared backbone; "
                    "enable high-rank pass-through to copy it from the anchor"
                )
            report.high_rank.append(name)
            report.pass_through.append(name)
            continue

        if shapes[0] == shapes[1] == shapes[2]:
            triples.append(AlignedTriple(name, base_rec, ml_rec, anchor_rec))
            report.aligned.append(name)
            continue

        if shape_policy == "strict":
            raise AlignmentError(
                f"{name}: shape mismatch under strict policy: "
                f"base {shapes[0]}, multilingual {shapes[1]}, anchor {shapes[2]}"
            )
        if len({len(s) for s in shapes}) != 1:
            raise AlignmentError(f"{name}: rank mismatch {shapes} cannot overlap")
        overlap = tuple(min(dims) for dims in zip(*shapes))
        triples.append(
            AlignedTriple(name, _crop(base_rec, overlap), _crop(ml_rec, overlap), _crop(anchor_rec, overlap))
        )
        report.aligned.append(name)
        report.shape_mismatches.append(
            ShapeMismatch(name, *shapes, resolution="overlap", overlap_shape=overlap)
        )

    report.extra_in_base = [n for n in base.names() if n not in anchor.tensors]
    report.extra_in_ml = [n for n in ml.names() if n not in anchor.tensors]
    return triples, report
