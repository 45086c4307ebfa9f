"""Residual-heterogeneity report: per-layer, per-module-type aggregation of
residual norm, base-relative reorientation, and cross-residual alignment,
exported as plot-ready tables.

Raw values are exported; color normalization is left to the plotter. Keys
without a parsable layer index (embeddings, output head, final norm) group
under layer -1.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np

from .align import align_triple
from .errors import ConfigError
from .geometry import EPSILON_DEFAULT, tensor_stats
from .scope import DEFAULT_LAYER_PATTERN, parse_layer_index
from .store import Checkpoint

logger = logging.getLogger(__name__)

CSV_HEADER = ("layer", "module", "norm_ml", "norm_mm", "dirdev_ml", "dirdev_mm", "cross_cos")

DEFAULT_MODULE_LABELS = (
    ("q_proj", "attn.q"),
    ("k_proj", "attn.k"),
    ("v_proj", "attn.v"),
    ("o_proj", "attn.o"),
    ("gate_proj", "mlp.gate"),
    ("up_proj", "mlp.up"),
    ("down_proj", "mlp.down"),
    ("input_layernorm", "norm.in"),
    ("post_attention_layernorm", "norm.post"),
    ("embed_tokens", "embed"),
    ("lm_head", "head"),
)


@dataclass(frozen=True)
class ModuleKeySchema:
    """Classifies backbone keys into (layer, module-type) groups.

    ``module_labels`` is an ordered list of (substring, label); the first
    matching substring wins and unlabeled keys group under "other".
    """

    layer_pattern: str = DEFAULT_LAYER_PATTERN
    module_labels: tuple[tuple[str, str], ...] = DEFAULT_MODULE_LABELS

    def layer_of(self, key: str) -> int | None:
        return parse_layer_index(key, self.layer_pattern)

    def label_of(self, key: str) -> str:
        for substring, label in self.module_labels:
            if substring in key:
                return label
        return "other"

    def label_order(self, label: str) -> int:
        for i, (_, lab) in enumerate(self.module_labels):
            if lab == label:
                return i
        return len(self.module_labels)

    def to_dict(self) -> dict:
        return {"layer_pattern": self.layer_pattern, "module_labels": [list(p) for p in self.module_labels]}

    @classmethod
    def from_dict(cls, data: dict) -> "ModuleKeySchema":
        return cls(
            layer_pattern=data.get("layer_pattern", DEFAULT_LAYER_PATTERN),
            module_labels=tuple(
                (str(a), str(b)) for a, b in data.get("module_labels", DEFAULT_MODULE_LABELS)
            ),
        )


@dataclass(frozen=True)
class HeatmapRow:
    """One (layer, module) cell of the heterogeneity report.

    Group residual norms are the Frobenius norms of the concatenated group
    residual (root of the summed per-tensor squared norms), so squared row
    norms sum to the squared norm of the full backbone residual. Direction
    and alignment columns are column-count-weighted means over the group's
    2D tensors and are absent (NaN/null) for groups holding only 1D tensors.
    """

    layer: int
    module: str
    norm_ml: float
    norm_mm: float
    dirdev_ml: float | None
    dirdev_mm: float | None
    cross_cos: float | None

    def to_dict(self) -> dict:
        return {
            "layer": self.layer,
            "module": self.module,
            "norm_ml": self.norm_ml,
            "norm_mm": self.norm_mm,
            "dirdev_ml": self.dirdev_ml,
            "dirdev_mm": self.dirdev_mm,
            "cross_cos": self.cross_cos,
        }


def diagnose(
    base: Checkpoint,
    ml: Checkpoint,
    anchor: Checkpoint,
    schema: ModuleKeySchema | None = None,
    epsilon: float = EPSILON_DEFAULT,
) -> list[HeatmapRow]:
    """Group residual diagnostics by (layer, module type).

    Inputs must already be key-remapped; alignment is strict and read-only.
    """
    schema = schema or ModuleKeySchema()
    triples, _ = align_triple(base, ml, anchor, scope=None, shape_policy="strict", high_rank="pass_through")

    if triples and not any(schema.layer_of(t.name) is not None for t in triples):
        logger.warning("layer pattern %r captured no layer index; grouping all keys under layer -1",
                       schema.layer_pattern)

    groups: dict[tuple[int, str], list] = {}
    for triple in triples:
        layer = schema.layer_of(triple.name)
        key = (-1 if layer is None else layer, schema.label_of(triple.name))
        stats = tensor_stats(triple, epsilon)
        columns = triple.shape[1] if triple.rank == 2 else 0
        groups.setdefault(key, []).append((stats, columns))

    rows = []
    for (layer, module), members in groups.items():
        sq_ml = sum(s.residual_norm_ml**2 for s, _ in members)
        sq_mm = sum(s.residual_norm_mm**2 for s, _ in members)
        dir_members = [(s, c) for s, c in members if s.mean_dir_dev_ml is not None]
        if dir_members:
            total_cols = sum(c for _, c in dir_members)
            dd_ml = sum(s.mean_dir_dev_ml * c for s, c in dir_members) / total_cols
            dd_mm = sum(s.mean_dir_dev_mm * c for s, c in dir_members) / total_cols
            cross = sum(s.mean_cross_cosine * c for s, c in dir_members) / total_cols
        else:
            dd_ml = dd_mm = cross = None
        rows.append(
            HeatmapRow(
                layer=layer,
                module=module,
                norm_ml=float(np.sqrt(sq_ml)),
                norm_mm=float(np.sqrt(sq_mm)),
                dirdev_ml=dd_ml,
                dirdev_mm=dd_mm,
                cross_cos=cross,
            )
        )
    rows.sort(key=lambda r: (r.layer, schema.label_order(r.module), r.module))
    return rows


def _fmt(value: float | None) -> str:
    return "nan" if value is None else format(value, ".9g")


def export_csv(rows: list[HeatmapRow], path) -> None:
    """Write rows as CSV with the fixed header, 9 significant digits."""
    if not rows:
        raise ConfigError("no rows to export")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(
                [row.layer, row.module, _fmt(row.norm_ml), _fmt(row.norm_mm),
                 _fmt(row.dirdev_ml), _fmt(row.dirdev_mm), _fmt(row.cross_cos)]
            )


def export_json(rows: list[HeatmapRow], path) -> None:
    """Write rows as a JSON array of objects with the CSV field names."""
    if not rows:
        raise ConfigError("no rows to export")
    with open(path, "w") as fh:
        json.dump([row.to_dict() for row in rows], fh, indent=2)
        fh.write("\n")
