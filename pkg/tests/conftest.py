"""Shared fixtures: a tiny synthetic 2-layer transformer triple."""

import numpy as np
import pytest

from dimerge.records import DType, TensorRecord
from dimerge.store import Checkpoint, Role

HIDDEN = 4
INTERMEDIATE = 6
VOCAB = 11
LAYERS = 2


def backbone_shapes() -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {
        "model.embed_tokens.weight": (VOCAB, HIDDEN),
        "model.norm.weight": (HIDDEN,),
        "lm_head.weight": (VOCAB, HIDDEN),
    }
    for layer in range(LAYERS):
        prefix = f"model.layers.{layer}."
        for proj in ("q_proj", "k_proj", "v_proj", "o_proj"):
            shapes[f"{prefix}self_attn.{proj}.weight"] = (HIDDEN, HIDDEN)
        shapes[f"{prefix}mlp.gate_proj.weight"] = (INTERMEDIATE, HIDDEN)
        shapes[f"{prefix}mlp.up_proj.weight"] = (INTERMEDIATE, HIDDEN)
        shapes[f"{prefix}mlp.down_proj.weight"] = (HIDDEN, INTERMEDIATE)
        shapes[f"{prefix}input_layernorm.weight"] = (HIDDEN,)
        shapes[f"{prefix}post_attention_layernorm.weight"] = (HIDDEN,)
    return shapes


ANCHOR_EXTRA_SHAPES = {
    "vision_tower.blocks.0.attn.weight": (3, 3),
    "multi_modal_projector.linear_1.weight": (HIDDEN, 3),
    "multi_modal_projector.linear_1.bias": (HIDDEN,),
}


def _records(shapes: dict, rng: np.random.Generator, dtype=DType.F32, scale=1.0):
    records = []
    for name, shape in shapes.items():
        values = rng.normal(scale=scale, size=shape).astype(np.float32)
        records.append(TensorRecord.from_array(name, values, dtype=dtype))
    return records


def make_triple(seed: int = 0, dtype: DType = DType.F32, residual_scale: float = 0.05):
    """Base, multilingual, and anchor checkpoints sharing a tiny backbone.

    Source tensors are base plus small random residuals; the anchor carries
    extra vision/projector tensors that must pass through any merge.
    """
    rng = np.random.default_rng(seed)
    shapes = backbone_shapes()
    base_records = _records(shapes, rng, dtype=dtype)
    base = Checkpoint.from_records(base_records, role=Role.BASE)

    def perturb(role: Role, extra: dict | None = None) -> Checkpoint:
        records = []
        for name, rec in base.tensors.items():
            res = rng.normal(scale=residual_scale, size=rec.shape).astype(np.float32)
            records.append(TensorRecord.from_array(name, rec.to_f32() + res, dtype=dtype))
        if extra:
            records.extend(_records(extra, rng, dtype=dtype))
        return Checkpoint.from_records(records, role=role)

    ml = perturb(Role.MULTILINGUAL)
    anchor = perturb(Role.ANCHOR, extra=ANCHOR_EXTRA_SHAPES)
    return base, ml, anchor


@pytest.fixture
def triple_f32():
    return make_triple(seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
