"""Model heads: patch-level music encoder, char-level decoder, text encoder.

All three are small pre-LN transformers over the autograd layer.  The music
and text encoders mean-pool their contextual features and project into one
shared embedding dimension; embeddings are deliberately NOT L2-normalized.
Desk-scale defaults are 2 layers / hidden 64 / 2 heads; the paper-scale
configuration (12-layer 768 encoder, 3-layer 768 decoder) is constructible
but untrained.

Parameters live in a flat name -> Tensor dict, initialized from N(0, 0.02^2)
with zero biases, and round-trip exactly through the checkpoint container.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .autograd import Tensor, concat, gelu, layer_norm, log_softmax, softmax, take
from .patching import (
    CHAR_VOCAB_SIZE,
    PAD_ID,
    PATCH_CHAR_CAPACITY,
    Patch,
    PatchSequence,
    encode_chars,
)

INIT_STD = 0.02
CHECKPOINT_VERSION = 1


class SequenceTooLong(Exception):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 2
    hidden: int = 64
    heads: int = 2
    max_positions: int = 512

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ValueError("hidden must be divisible by heads")


@dataclass(frozen=True)
class ModelConfig:
    music: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: EncoderConfig = field(
        default_factory=lambda: EncoderConfig(max_positions=PATCH_CHAR_CAPACITY + 1))
    text: EncoderConfig = field(
        default_factory=lambda: EncoderConfig(max_positions=128))
    shared_dim: int = 64
    text_vocab_size: int = 4096

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelConfig":
        return cls(music=EncoderConfig(**payload["music"]),
                   decoder=EncoderConfig(**payload["decoder"]),
                   text=EncoderConfig(**payload["text"]),
                   shared_dim=payload["shared_dim"],
                   text_vocab_size=payload["text_vocab_size"])


def paper_scale_config() -> ModelConfig:
    """The published model sizes; constructible here, never trained here."""
    return ModelConfig(
        music=EncoderConfig(layers=12, hidden=768, heads=12, max_positions=512),
        decoder=EncoderConfig(layers=3, hidden=768, heads=12,
                              max_positions=PATCH_CHAR_CAPACITY + 1),
        text=EncoderConfig(layers=12, hidden=768, heads=12, max_positions=128),
        shared_dim=768,
        text_vocab_size=250002,
    )


# -- parameter initialization -------------------------------------------------

def _add_linear(params, name, fan_in, fan_out, rng):
    params[f"{name}.w"] = Tensor(rng.normal(0.0, INIT_STD, (fan_in, fan_out)),
                                 requires_grad=True)
    params[f"{name}.b"] = Tensor(np.zeros(fan_out), requires_grad=True)


def _add_layer_norm(params, name, dim):
    params[f"{name}.g"] = Tensor(np.ones(dim), requires_grad=True)
    params[f"{name}.b"] = Tensor(np.zeros(dim), requires_grad=True)


def _add_stack(params, prefix, cfg: EncoderConfig, rng):
    h = cfg.hidden
    for i in range(cfg.layers):
        base = f"{prefix}.l{i}"
        _add_layer_norm(params, f"{base}.ln1", h)
        for proj in ("q", "k", "v", "o"):
            _add_linear(params, f"{base}.attn.{proj}", h, h, rng)
        _add_layer_norm(params, f"{base}.ln2", h)
        _add_linear(params, f"{base}.ffn.fc1", h, 4 * h, rng)
        _add_linear(params, f"{base}.ffn.fc2", 4 * h, h, rng)
    _add_layer_norm(params, f"{prefix}.ln_f", h)


def init_music_params(config: ModelConfig, rng) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    h = config.music.hidden
    params["music.patch.w"] = Tensor(
        rng.normal(0.0, INIT_STD, (PATCH_CHAR_CAPACITY * CHAR_VOCAB_SIZE, h)),
        requires_grad=True)
    params["music.patch.b"] = Tensor(np.zeros(h), requires_grad=True)
    params["music.pos"] = Tensor(
        rng.normal(0.0, INIT_STD, (config.music.max_positions, h)),
        requires_grad=True)
    _add_stack(params, "music", config.music, rng)
    _add_linear(params, "music.head", h, config.shared_dim, rng)
    return params


def init_decoder_params(config: ModelConfig, rng) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    h = config.decoder.hidden
    params["dec.char_emb"] = Tensor(
        rng.normal(0.0, INIT_STD, (CHAR_VOCAB_SIZE, h)), requires_grad=True)
    _add_linear(params, "dec.feat", config.music.hidden, h, rng)
    params["dec.pos"] = Tensor(
        rng.normal(0.0, INIT_STD, (config.decoder.max_positions, h)),
        requires_grad=True)
    _add_stack(params, "dec", config.decoder, rng)
    _add_linear(params, "dec.out", h, CHAR_VOCAB_SIZE, rng)
    return params


def init_text_params(config: ModelConfig, rng) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    h = config.text.hidden
    params["text.tok_emb"] = Tensor(
        rng.normal(0.0, INIT_STD, (config.text_vocab_size, h)), requires_grad=True)
    params["text.pos"] = Tensor(
        rng.normal(0.0, INIT_STD, (config.text.max_positions, h)),
        requires_grad=True)
    _add_stack(params, "text", config.text, rng)
    _add_linear(params, "text.head", h, config.shared_dim, rng)
    return params


def init_m3_params(config: ModelConfig, rng) -> dict[str, Tensor]:
    params = init_music_params(config, rng)
    params.update(init_decoder_params(config, rng))
    return params


def init_clamp_params(config: ModelConfig, rng) -> dict[str, Tensor]:
    params = init_music_params(config, rng)
    params.update(init_text_params(config, rng))
    return params


# -- transformer forward -------------------------------------------------------

def _attention(x: Tensor, params, base: str, cfg: EncoderConfig,
               bias: np.ndarray | None) -> Tensor:
    batch, length, hidden = x.shape
    head_dim = hidden // cfg.heads

    def project(name):
        p = x @ params[f"{base}.attn.{name}.w"] + params[f"{base}.attn.{name}.b"]
        return p.reshape(batch, length, cfg.heads, head_dim).transpose((0, 2, 1, 3))

    q, k, v = project("q"), project("k"), project("v")
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(head_dim))
    if bias is not None:
        scores = scores + Tensor(bias)
    weights = softmax(scores, axis=-1)
    mixed = (weights @ v).transpose((0, 2, 1, 3)).reshape(batch, length, hidden)
    return mixed @ params[f"{base}.attn.o.w"] + params[f"{base}.attn.o.b"]


def _stack(x: Tensor, params, prefix: str, cfg: EncoderConfig,
           bias: np.ndarray | None) -> Tensor:
    for i in range(cfg.layers):
        base = f"{prefix}.l{i}"
        normed = layer_norm(x, params[f"{base}.ln1.g"], params[f"{base}.ln1.b"])
        x = x + _attention(normed, params, base, cfg, bias)
        normed = layer_norm(x, params[f"{base}.ln2.g"], params[f"{base}.ln2.b"])
        hidden = gelu(normed @ params[f"{base}.ffn.fc1.w"] + params[f"{base}.ffn.fc1.b"])
        x = x + (hidden @ params[f"{base}.ffn.fc2.w"] + params[f"{base}.ffn.fc2.b"])
    return layer_norm(x, params[f"{prefix}.ln_f.g"], params[f"{prefix}.ln_f.b"])


def _padding_bias(valid: np.ndarray) -> np.ndarray | None:
    if valid.all():
        return None
    bias = np.where(valid, 0.0, -1e9)
    return bias[:, None, None, :]


def _masked_mean(features: Tensor, valid: np.ndarray) -> Tensor:
    mask = valid.astype(np.float64)[:, :, None]
    counts = mask.sum(axis=1)
    return (features * Tensor(mask)).sum(axis=1) / Tensor(counts)


# -- music encoder --------------------------------------------------------------

def patch_id_matrix(patches: Sequence[Patch]) -> np.ndarray:
    """Encode patches as a [N, 64] id matrix, PAD-filled and slot-truncated."""
    out = np.full((len(patches), PATCH_CHAR_CAPACITY), PAD_ID, dtype=np.int64)
    for row, patch in enumerate(patches):
        ids = encode_chars(patch)[:PATCH_CHAR_CAPACITY]
        out[row, :len(ids)] = ids
    return out


def embed_patch_ids(id_matrix: np.ndarray, params) -> Tensor:
    """Linear projection of each patch's 64-slot one-hot char block.

    Equivalent to flattening the (64, vocab) one-hot block and multiplying by
    the projection matrix; computed as a slot-wise gather plus sum.
    """
    slots = np.arange(PATCH_CHAR_CAPACITY, dtype=np.int64) * CHAR_VOCAB_SIZE
    flat = (id_matrix + slots).reshape(-1)
    rows = take(params["music.patch.w"], flat)
    summed = rows.reshape(*id_matrix.shape[:-1], PATCH_CHAR_CAPACITY, -1).sum(axis=-2)
    return summed + params["music.patch.b"]


def patch_embed(patch: Patch, params) -> Tensor:
    """Embedding of a single patch (the bar-patching input projection)."""
    return embed_patch_ids(patch_id_matrix([patch]), params)[0]


def encode_music_batch(id_matrices: np.ndarray, valid: np.ndarray, params,
                       config: ModelConfig) -> tuple[Tensor, Tensor]:
    """Contextualize patch embeddings and pool a global vector per sequence.

    ``id_matrices`` is [B, N, 64] int ids and ``valid`` a [B, N] bool mask.
    Returns (per-patch features [B, N, hidden], global [B, shared_dim]).
    """
    batch, length, _ = id_matrices.shape
    if length > config.music.max_positions:
        raise SequenceTooLong(
            f"{length} patches exceeds max of {config.music.max_positions}")
    x = embed_patch_ids(id_matrices, params)
    x = x + take(params["music.pos"], np.arange(length)).reshape(1, length, -1)
    features = _stack(x, params, "music", config.music, _padding_bias(valid))
    pooled = _masked_mean(features, valid)
    vector = pooled @ params["music.head.w"] + params["music.head.b"]
    return features, vector


def encode_music(seq: PatchSequence | Sequence[Patch], params,
                 config: ModelConfig) -> tuple[Tensor, Tensor]:
    """Single-sequence convenience wrapper around encode_music_batch."""
    patches = list(seq)
    ids = patch_id_matrix(patches)[None, :, :]
    valid = np.ones((1, len(patches)), dtype=bool)
    features, vector = encode_music_batch(ids, valid, params, config)
    return features[0], vector[0]


# -- char decoder ----------------------------------------------------------------

def decode_chars_batch(patch_features: Tensor, targets: Sequence[Sequence[int]],
                       params, config: ModelConfig) -> tuple[Tensor, Tensor]:
    """Autoregressive char reconstruction of many patches at once.

    The patch feature occupies position 0; logits at position t see the
    feature and target chars strictly before t.  Loss is the mean token
    cross-entropy over real (non-padding) target positions.
    """
    count = len(targets)
    lengths = np.array([len(t) for t in targets], dtype=np.int64)
    max_len = int(lengths.max()) if count else 0
    if max_len == 0:
        return Tensor(np.zeros((count, 0, CHAR_VOCAB_SIZE))), Tensor(0.0)
    if max_len + 1 > config.decoder.max_positions:
        raise SequenceTooLong(
            f"target length {max_len} exceeds decoder positions")

    target_ids = np.full((count, max_len), PAD_ID, dtype=np.int64)
    for row, ids in enumerate(targets):
        target_ids[row, :len(ids)] = ids

    feature_col = (patch_features @ params["dec.feat.w"] + params["dec.feat.b"])
    feature_col = feature_col.reshape(count, 1, -1)
    if max_len > 1:
        char_inputs = take(params["dec.char_emb"],
                           target_ids[:, :-1].reshape(-1))
        char_inputs = char_inputs.reshape(count, max_len - 1, -1)
        x = concat([feature_col, char_inputs], axis=1)
    else:
        x = feature_col
    length = max_len
    x = x + take(params["dec.pos"], np.arange(length)).reshape(1, length, -1)

    causal = np.triu(np.full((length, length), -1e9), k=1)[None, None, :, :]
    hidden = _stack(x, params, "dec", config.decoder, causal)
    logits = hidden @ params["dec.out.w"] + params["dec.out.b"]

    log_probs = log_softmax(logits, axis=-1)
    one_hot = np.zeros((count, max_len, CHAR_VOCAB_SIZE))
    position_valid = np.arange(max_len)[None, :] < lengths[:, None]
    rows, cols = np.nonzero(position_valid)
    one_hot[rows, cols, target_ids[rows, cols]] = 1.0
    total = (log_probs * Tensor(one_hot)).sum()
    loss = -total / float(len(rows))
    return logits, loss


def decode_chars(patch_feature: Tensor, target_ids: Sequence[int], params,
                 config: ModelConfig) -> tuple[Tensor, Tensor]:
    """Per-char logits and mean cross-entropy for one patch reconstruction."""
    feature = patch_feature.reshape(1, -1)
    logits, loss = decode_chars_batch(feature, [list(target_ids)], params, config)
    return logits[0], loss


# -- text encoder -----------------------------------------------------------------

def encode_text_batch(token_ids: np.ndarray, valid: np.ndarray, params,
                      config: ModelConfig) -> Tensor:
    batch, length = token_ids.shape
    if length > config.text.max_positions:
        raise SequenceTooLong(
            f"{length} tokens exceeds max of {config.text.max_positions}")
    x = take(params["text.tok_emb"], token_ids.reshape(-1)).reshape(batch, length, -1)
    x = x + take(params["text.pos"], np.arange(length)).reshape(1, length, -1)
    features = _stack(x, params, "text", config.text, _padding_bias(valid))
    pooled = _masked_mean(features, valid)
    return pooled @ params["text.head.w"] + params["text.head.b"]


def encode_text(token_ids: Sequence[int], params, config: ModelConfig) -> Tensor:
    ids = np.asarray(list(token_ids), dtype=np.int64)[None, :]
    if ids.shape[1] == 0:
        raise ValueError("cannot encode an empty token sequence")
    valid = np.ones_like(ids, dtype=bool)
    return encode_text_batch(ids, valid, params, config)[0]


# -- checkpoints --------------------------------------------------------------------

def save_checkpoint(path, params: dict[str, Tensor], meta: dict | None = None,
                    config: ModelConfig | None = None, kind: str = "model"):
    """Write a versioned npz container mapping parameter names to arrays."""
    header = {"format": "symir-checkpoint", "version": CHECKPOINT_VERSION,
              "kind": kind}
    if config is not None:
        header["model_config"] = config.to_dict()
    if meta:
        header["meta"] = meta
    arrays = {name: tensor.data for name, tensor in params.items()}
    with open(path, "wb") as handle:
        np.savez(handle, __header__=np.array(json.dumps(header)), **arrays)


def load_checkpoint(path) -> tuple[dict[str, Tensor], dict]:
    """Read a checkpoint; parameter arrays round-trip exactly."""
    with np.load(path, allow_pickle=False) as bundle:
        header = json.loads(str(bundle["__header__"]))
        if header.get("format") != "symir-checkpoint":
            raise ValueError("not a symir checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        params = {name: Tensor(bundle[name], requires_grad=True)
                  for name in bundle.files if name != "__header__"}
    return params, header
