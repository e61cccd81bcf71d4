"""Analytical model of transformer inference kernels.

Turns a model description (hidden size, layer count, heads, attention
variant, block formulation) plus a sequence configuration into:

- an ordered list of computational kernel instances with exact FLOP and
  byte counts (projections, attention score, output projection, feed
  forward, layer norm, one-time embedding),
- the fraction of matrix-vector work spent in fully-connected kernels,
- the storage blowup of attention intermediates relative to static
  weights,
- a write-endurance estimate for materializing attention intermediates
  in resistive crossbar memory.

All functions are pure: identical inputs give identical outputs, and the
returned values are plain dataclasses safe to share across tasks.

Shape conventions: d is the hidden dimension, h the head count, N the
token count of the processed sequence, l the attended context length.
Per block, the multi-head group costs 6*N*d^2 FLOPs for the Q/K/V
projections, 4*N*l*d for the two score matrix products, and 2*N*d^2 for
the output projection; the feed-forward pair of d -> 4d -> d layers
costs 16*N*d^2. The multi-query variant shrinks only the K/V weight
matrices (by exactly 1/h); its compute is identical to multi-head.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

BLOCK_STRUCTURES = ("encoder-only", "decoder-only", "encoder-decoder")
ATTENTION_VARIANTS = ("MHA", "MQA")
BLOCK_FORMULATIONS = ("serial", "parallel")
KERNEL_KINDS = ("Embed", "WeightLoad", "KQV", "Score", "OutProj",
                "FeedForward", "LayerNorm")


@dataclass(frozen=True)
class ModelSpec:
    """Transformer architecture descriptor."""

    name: str
    block_structure: str
    d_model: int
    num_layers: int
    num_heads: int
    param_count: int = 0
    attention_variant: str = "MHA"
    block_formulation: str = "serial"
    precision_bits: int = 16

    def __post_init__(self):
        if self.block_structure not in BLOCK_STRUCTURES:
            raise ValueError(f"unknown block_structure {self.block_structure!r}")
        if self.attention_variant not in ATTENTION_VARIANTS:
            raise ValueError(f"unknown attention_variant {self.attention_variant!r}")
        if self.block_formulation not in BLOCK_FORMULATIONS:
            raise ValueError(f"unknown block_formulation {self.block_formulation!r}")
        if self.d_model < 1:
            raise ValueError("d_model must be positive")
        if self.num_heads < 1:
            raise ValueError("num_heads must be positive")
        if self.num_layers < 0:
            raise ValueError("num_layers must be >= 0")
        if self.d_model % self.num_heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by num_heads {self.num_heads}")
        if self.precision_bits not in (8, 16, 32):
            raise ValueError("precision_bits must be 8, 16 or 32")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.num_heads

    @property
    def bytes_per_value(self) -> int:
        return self.precision_bits // 8


@dataclass(frozen=True)
class SequenceConfig:
    """Token counts for one inference pass.

    context_len defaults to seq_len (full self-attention over the
    processed sequence).
    """

    seq_len: int
    context_len: int | None = None

    def __post_init__(self):
        if self.seq_len < 0:
            raise ValueError("seq_len must be >= 0")
        if self.context_len is None:
            object.__setattr__(self, "context_len", self.seq_len)
        if self.context_len < 0:
            raise ValueError("context_len must be >= 0")


@dataclass(frozen=True)
class KernelCosts:
    """Per-element cost constants for non-matmul work.

    softmax_flops_per_element covers the normalization of one score
    entry. layernorm_flops_per_element covers norm plus residual add.
    gelu_flops_per_element defaults to zero, i.e. activation cost is
    treated as part of the feed-forward matmul figure.
    """

    softmax_flops_per_element: int = 5
    layernorm_flops_per_element: int = 5
    gelu_flops_per_element: int = 0


DEFAULT_COSTS = KernelCosts()


@dataclass(frozen=True)
class KernelInstance:
    """One computational kernel occurrence inside the block stack."""

    kind: str
    block_index: int
    flops: int
    weight_bytes: int
    activation_in_bytes: int
    activation_out_bytes: int
    cross_attention: bool = False
    concurrent_group: int | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if min(self.flops, self.weight_bytes, self.activation_in_bytes,
               self.activation_out_bytes) < 0:
            raise ValueError("kernel counts must be non-negative")


@dataclass(frozen=True)
class WriteEstimate:
    """Write pressure of attention intermediates on crossbar memory."""

    write_bits_per_cell_per_token: float
    total_write_bits_per_encoder: float
    endurance_limit: int
    exceeds_endurance: bool
    write_events_per_token: int = 0
    write_events_per_encoder: int = 0


def projection_weight_bytes(model: ModelSpec) -> dict[str, int]:
    """Bytes of each attention projection matrix for one block.

    Q and the output projection are always full d x d matrices. K and V
    are full in the multi-head variant and a single d x (d/h) head in
    the multi-query variant.
    """
    d, b = model.d_model, model.bytes_per_value
    full = d * d * b
    if model.attention_variant == "MQA":
        kv = d * model.head_dim * b
    else:
        kv = full
    return {"q": full, "k": kv, "v": kv, "o": full}


def _block_roles(model: ModelSpec) -> list[str]:
    """Role ("encoder" or "decoder") of each block in stack order."""
    k = model.num_layers
    if model.block_structure == "encoder-only":
        return ["encoder"] * k
    if model.block_structure == "decoder-only":
        return ["decoder"] * k
    n_enc = (k + 1) // 2
    return ["encoder"] * n_enc + ["decoder"] * (k - n_enc)


def kernel_sequence(model: ModelSpec, seq: SequenceConfig,
                    costs: KernelCosts = DEFAULT_COSTS) -> list[KernelInstance]:
    """Ordered kernel instances for one end-to-end inference pass.

    Emits a single Embed kernel, then per block: WeightLoad, KQV, Score,
    OutProj, (cross-attention KQV and Score for decoder blocks of
    encoder-decoder models), FeedForward, LayerNorm. With the parallel
    block formulation the attention group and the feed-forward kernel of
    a block carry the same concurrent_group id.
    """
    d, h, b = model.d_model, model.num_heads, model.bytes_per_value
    n, l = seq.seq_len, seq.context_len
    proj = projection_weight_bytes(model)

    proj_flops = 2 * n * d * d
    kqv_flops = 3 * proj_flops
    score_flops = (4 * n * l * d
                   + costs.softmax_flops_per_element * n * l)
    ff_flops = 16 * n * d * d + costs.gelu_flops_per_element * 4 * n * d
    ln_flops = costs.layernorm_flops_per_element * n * d

    act = n * d * b  # one full activation matrix

    out = [KernelInstance("Embed", 0, 2 * n * d, 0, act, act)]
    for block, role in enumerate(_block_roles(model)):
        group = block if model.block_formulation == "parallel" else None
        cross = role == "decoder" and model.block_structure == "encoder-decoder"
        out.append(KernelInstance(
            "WeightLoad", block, 0, sum(proj.values()), 0, 0))
        out.append(KernelInstance(
            "KQV", block, kqv_flops, 0, act, 3 * act, concurrent_group=group))
        out.append(KernelInstance(
            "Score", block, score_flops, 0, 3 * act, act, concurrent_group=group))
        out.append(KernelInstance(
            "OutProj", block, proj_flops, 0, act, act, concurrent_group=group))
        if cross:
            out.append(KernelInstance(
                "KQV", block, kqv_flops, 0, act, 3 * act,
                cross_attention=True, concurrent_group=group))
            out.append(KernelInstance(
                "Score", block, score_flops, 0, 3 * act, act,
                cross_attention=True, concurrent_group=group))
        out.append(KernelInstance(
            "FeedForward", block, ff_flops, 8 * d * d * b, act, act,
            concurrent_group=group))
        out.append(KernelInstance("LayerNorm", block, ln_flops, 0, act, act))
    return out


def fc_dominance(model: ModelSpec, seq: SequenceConfig) -> float:
    """Share of matrix-vector FLOPs spent in fully-connected kernels.

    Numerator: projections, output projection and feed forward, all
    O(N d^2). Denominator adds the O(N l d) score products. Softmax and
    layer-norm element work is excluded on both sides.
    """
    mvm_costs = KernelCosts(softmax_flops_per_element=0,
                            gelu_flops_per_element=0)
    fc = 0
    total = 0
    for k in kernel_sequence(model, seq, mvm_costs):
        if k.kind in ("KQV", "OutProj", "FeedForward"):
            fc += k.flops
            total += k.flops
        elif k.kind == "Score":
            total += k.flops
    if total == 0:
        return 0.0
    return fc / total


def intermediate_storage_ratio(model: ModelSpec, seq: SequenceConfig) -> float:
    """Bytes of per-block attention intermediates over static weights.

    Intermediates: Q, K, V, the raw score matrix, its normalized form,
    and the per-head attention output, all at model precision. Weights:
    the four projection matrices plus both feed-forward layers.
    """
    d, h, b = model.d_model, model.num_heads, model.bytes_per_value
    n, l = seq.seq_len, seq.context_len
    if model.attention_variant == "MQA":
        kv_elems = 2 * l * model.head_dim
    else:
        kv_elems = 2 * l * d
    q_elems = n * d
    score_elems = 2 * h * n * l  # raw and normalized score matrices
    p_elems = n * d
    inter = (q_elems + kv_elems + score_elems + p_elems) * b
    weights = sum(projection_weight_bytes(model).values()) + 8 * d * d * b
    return inter / weights


def reram_write_load(model: ModelSpec, seq: SequenceConfig,
                     cell_bits: int, crossbar_dim: int,
                     crossbars_per_chiplet: int,
                     endurance_limit: int = 10 ** 6) -> WriteEstimate:
    """Write pressure if attention intermediates lived in crossbars.

    Per processed token the dynamic operands of the two score products
    (the K and V matrices over the attended context) must be rewritten,
    plus the token's own Q row, score row per head, and output row.
    Totals scale linearly with seq_len; the per-cell figure divides the
    per-token bit volume by the chiplet cell capacity.

    The endurance verdict follows the aggregate accounting: the estimate
    flags a model whose per-encoder rewrite count exceeds the cycle
    budget a single cell tolerates, since the dynamic operands cycle
    through the same physical arrays every token.
    """
    if cell_bits < 1 or crossbar_dim < 1 or crossbars_per_chiplet < 1:
        raise ValueError("crossbar geometry must be positive")
    capacity_bits = crossbars_per_chiplet * crossbar_dim ** 2 * cell_bits
    if capacity_bits == 0:
        raise ValueError("chiplet cell capacity is zero")

    d, h = model.d_model, model.num_heads
    n, l = seq.seq_len, seq.context_len
    kv_width = model.head_dim if model.attention_variant == "MQA" else d
    per_token_events = 2 * l * kv_width + 2 * d + h * l
    bits_per_token = per_token_events * model.precision_bits

    events_per_encoder = per_token_events * n
    return WriteEstimate(
        write_bits_per_cell_per_token=bits_per_token / capacity_bits,
        total_write_bits_per_encoder=float(bits_per_token * n),
        endurance_limit=endurance_limit,
        exceeds_endurance=events_per_encoder > endurance_limit,
        write_events_per_token=per_token_events,
        write_events_per_encoder=events_per_encoder,
    )


# Built-in model catalog. param_count is informational (millions of
# parameters as published).
MODEL_PRESETS: dict[str, ModelSpec] = {
    m.name: m for m in [
        ModelSpec("BERT-Base", "encoder-only", 768, 12, 12,
                  param_count=110_000_000),
        ModelSpec("BERT-Large", "encoder-only", 1024, 24, 16,
                  param_count=340_000_000),
        ModelSpec("BART-Base", "encoder-decoder", 768, 12, 12,
                  param_count=140_000_000),
        ModelSpec("BART-Large", "encoder-decoder", 1024, 12, 16,
                  param_count=400_000_000),
        ModelSpec("GPT-J", "decoder-only", 4096, 28, 16,
                  param_count=6_700_000_000, block_formulation="parallel"),
        ModelSpec("Llama2-7B", "decoder-only", 4096, 32, 32,
                  param_count=7_000_000_000, attention_variant="MQA"),
    ]
}


def model_from_dict(doc: dict) -> ModelSpec:
    """Build a ModelSpec from a JSON-style dict of catalog fields."""
    return ModelSpec(
        name=doc["name"],
        block_structure=doc["block_structure"],
        d_model=int(doc["d_model"]),
        num_layers=int(doc["num_layers"]),
        num_heads=int(doc["num_heads"]),
        param_count=int(doc.get("param_count", 0)),
        attention_variant=doc.get("attention_variant", "MHA"),
        block_formulation=doc.get("block_formulation", "serial"),
        precision_bits=int(doc.get("precision_bits", 16)),
    )


def load_catalog(path: str | Path) -> dict[str, ModelSpec]:
    """Load a model catalog from a JSON document.

    The document holds {"models": [{...}, ...]} with the same fields as
    ModelSpec.
    """
    with open(path) as fh:
        doc = json.load(fh)
    return {m["name"]: model_from_dict(m) for m in doc["models"]}


def resolve_model(ref: str | dict) -> ModelSpec:
    """Resolve a preset name or an inline spec dict to a ModelSpec."""
    if isinstance(ref, str):
        try:
            return MODEL_PRESETS[ref]
        except KeyError:
            raise KeyError(
                f"unknown model preset {ref!r}; "
                f"available: {', '.join(sorted(MODEL_PRESETS))}") from None
    return model_from_dict(ref)


def mha_clone(model: ModelSpec) -> ModelSpec:
    """The same architecture with standard multi-head attention."""
    return replace(model, name=model.name + "-MHA", attention_variant="MHA")


def serial_clone(model: ModelSpec) -> ModelSpec:
    """The same architecture with the serialized block formulation."""
    return replace(model, name=model.name + "-serial",
                   block_formulation="serial")
