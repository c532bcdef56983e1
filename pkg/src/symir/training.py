"""Training loops: masked music modeling and contrastive music-text alignment.

Both loops share the AdamW optimizer with a linear learning-rate warm-up and
are bit-reproducible under a fixed seed.  The contrastive stage uses a
symmetric InfoNCE objective over raw dot products with the logit scale fixed
at 1; embeddings are never L2-normalized, the scale is never a trainable
parameter, and no patch corruption is applied during this stage (the
corresponding approaches were tried and excluded upstream).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor, log_softmax, take
from .corpus import Triplet
from .model import (
    ModelConfig,
    decode_chars_batch,
    encode_music_batch,
    encode_text_batch,
    init_clamp_params,
    init_m3_params,
    patch_id_matrix,
)
from .patching import (
    PAD_ID,
    PATCH_CHAR_CAPACITY,
    PatchSequence,
    corrupt,
    encode_chars,
    patchize_abc,
    patchize_mtf,
    truncate,
)
from .sampling import SamplerPolicy, sample_view
from .tokenizers import PAD_TOKEN_ID, HashWordTokenizer


class EmptyCorpus(Exception):
    pass


class DimensionMismatch(Exception):
    pass


class ShapeMismatch(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 1e-3
    warmup_steps: int = 50
    max_epochs: int = 100
    seed: int = 0
    logit_scale: float = 1.0
    weight_decay: float = 0.0

    def __post_init__(self):
        # A learnable or non-unit logit scale degraded the published model;
        # the scale is fixed at 1 by construction.
        if self.logit_scale != 1.0:
            raise ValueError("logit_scale is fixed at 1.0")


def warmup_learning_rate(base: float, step: int, warmup_steps: int) -> float:
    """Linear ramp: step 1 gives base/warmup_steps, step warmup_steps gives base."""
    if warmup_steps <= 0:
        return base
    return base * min(1.0, step / warmup_steps)


# -- optimizer -------------------------------------------------------------

def adamw_init(params: dict[str, Tensor]) -> dict:
    return {
        "step": 0,
        "m": {k: np.zeros_like(p.data) for k, p in params.items()},
        "v": {k: np.zeros_like(p.data) for k, p in params.items()},
    }


def optimizer_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
                   state: dict, lr: float, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8,
                   weight_decay: float = 0.0) -> None:
    """One AdamW update: bias-corrected moments plus decoupled weight decay."""
    state["step"] += 1
    t = state["step"]
    bias1 = 1 - beta1 ** t
    bias2 = 1 - beta2 ** t
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param.data)
        if grad.shape != param.data.shape:
            raise ShapeMismatch(
                f"{name}: grad shape {grad.shape} != param shape {param.data.shape}")
        m = state["m"][name]
        v = state["v"][name]
        m *= beta1
        m += (1 - beta1) * grad
        v *= beta2
        v += (1 - beta2) * (grad * grad)
        denominator = np.sqrt(v / bias2)
        denominator += eps
        update = (m / bias1) / denominator
        if weight_decay:
            update = update + weight_decay * param.data
        param.data = param.data - lr * update


def zero_grads(params: dict[str, Tensor]) -> None:
    for param in params.values():
        param.grad = None


def collect_grads(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {name: param.grad for name, param in params.items()
            if param.grad is not None}


# -- contrastive objective ----------------------------------------------------

def infonce_loss(music_vectors: Tensor, text_vectors: Tensor,
                 scale: float = 1.0) -> Tensor:
    """Symmetric InfoNCE over raw dot products.

    Logits are ``scale * music @ text.T`` with the matched pairs on the
    diagonal; the loss averages row-wise and column-wise cross-entropy.  The
    scale is a plain constant, never a parameter, and no normalization is
    applied to either side.
    """
    if isinstance(scale, Tensor):
        raise TypeError("logit scale must be a constant, not a parameter")
    if music_vectors.ndim != 2 or text_vectors.ndim != 2:
        raise DimensionMismatch("expected [batch, dim] inputs")
    if music_vectors.shape != text_vectors.shape:
        raise DimensionMismatch(
            f"shape mismatch: {music_vectors.shape} vs {text_vectors.shape}")
    batch = music_vectors.shape[0]
    logits = (music_vectors @ text_vectors.swapaxes(0, 1)) * float(scale)
    eye = Tensor(np.eye(batch))
    row_ce = -(log_softmax(logits, axis=-1) * eye).sum() / float(batch)
    col_ce = -(log_softmax(logits.swapaxes(0, 1), axis=-1) * eye).sum() / float(batch)
    return (row_ce + col_ce) * 0.5


# -- batching helpers ----------------------------------------------------------

def _pad_patch_batch(sequences: list[PatchSequence]):
    max_len = max(len(s) for s in sequences)
    batch = len(sequences)
    ids = np.full((batch, max_len, PATCH_CHAR_CAPACITY), PAD_ID, dtype=np.int64)
    valid = np.zeros((batch, max_len), dtype=bool)
    for row, seq in enumerate(sequences):
        ids[row, :len(seq)] = patch_id_matrix(list(seq))
        valid[row, :len(seq)] = True
    return ids, valid


def _pad_token_batch(token_lists: list[list[int]]):
    max_len = max(len(t) for t in token_lists)
    batch = len(token_lists)
    ids = np.full((batch, max_len), PAD_TOKEN_ID, dtype=np.int64)
    valid = np.zeros((batch, max_len), dtype=bool)
    for row, tokens in enumerate(token_lists):
        ids[row, :len(tokens)] = tokens
        valid[row, :len(tokens)] = True
    return ids, valid


def _epoch_batches(count: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(count)
    for start in range(0, count, batch_size):
        yield order[start:start + batch_size]


# -- masked music modeling -------------------------------------------------------

@dataclass
class M3Result:
    params: dict[str, Tensor]
    losses: list[float]
    model_config: ModelConfig


def patchize(text: str, modality: str) -> PatchSequence:
    if modality == "abc":
        return patchize_abc(text)
    if modality == "mtf":
        return patchize_mtf(text)
    raise ValueError(f"unknown modality {modality!r}")


def train_m3(corpus, config: TrainConfig,
             model_config: ModelConfig | None = None,
             max_steps: int | None = None) -> M3Result:
    """Masked music modeling over a corpus of (modality, text) items.

    Per step: patchize, truncate, corrupt, encode the corrupted sequence,
    decode the original characters of the selected patches only, and take
    one optimizer step on the mean cross-entropy.
    """
    items = list(corpus)
    if not items:
        raise EmptyCorpus("train_m3 requires a non-empty corpus")
    cfg = model_config or ModelConfig()
    rng = np.random.default_rng(config.seed)
    params = init_m3_params(cfg, rng)
    state = adamw_init(params)
    sequences = [patchize(text, modality) for modality, text in items]
    if any(len(s) == 0 for s in sequences):
        raise EmptyCorpus("corpus item produced no patches")

    losses: list[float] = []
    step = 0
    for _ in range(config.max_epochs):
        for batch_index in _epoch_batches(len(sequences), config.batch_size, rng):
            step += 1
            corrupted_seqs = []
            targets: list[list[int]] = []
            flat_positions: list[tuple[int, int]] = []
            for slot, index in enumerate(batch_index):
                seq = truncate(sequences[index], cfg.music.max_positions, rng)
                noisy, plan = corrupt(seq, rng)
                corrupted_seqs.append(noisy)
                for patch_index, original in plan.targets:
                    ids = encode_chars(original)[:PATCH_CHAR_CAPACITY]
                    if not ids:
                        continue
                    targets.append(ids)
                    flat_positions.append((slot, patch_index))
            if not targets:
                continue

            ids, valid = _pad_patch_batch(corrupted_seqs)
            features, _ = encode_music_batch(ids, valid, params, cfg)
            width = features.shape[1]
            flat = features.reshape(-1, features.shape[-1])
            rows = np.array([slot * width + pos for slot, pos in flat_positions])
            selected = take(flat, rows)
            _, loss = decode_chars_batch(selected, targets, params, cfg)

            zero_grads(params)
            loss.backward()
            lr = warmup_learning_rate(config.learning_rate, step, config.warmup_steps)
            optimizer_step(params, collect_grads(params), state, lr,
                           weight_decay=config.weight_decay)
            losses.append(loss.item())
            if max_steps is not None and step >= max_steps:
                return M3Result(params, losses, cfg)
    return M3Result(params, losses, cfg)


# -- contrastive alignment ---------------------------------------------------------

@dataclass
class ClampResult:
    params: dict[str, Tensor]
    losses: list[float]
    model_config: ModelConfig


def train_clamp(triplets: list[Triplet], config: TrainConfig,
                model_config: ModelConfig | None = None,
                m3_params: dict[str, Tensor] | None = None,
                tokenizer=None, policy: SamplerPolicy | None = None,
                max_steps: int | None = None) -> ClampResult:
    """Contrastive alignment of music and text encoders over triplets.

    The music encoder can be initialized from an M3 checkpoint (its decoder
    parameters are dropped).  Patch sequences are truncated but never
    corrupted here.
    """
    if not triplets:
        raise EmptyCorpus("train_clamp requires a non-empty corpus")
    cfg = model_config or ModelConfig()
    rng = np.random.default_rng(config.seed)
    params = init_clamp_params(cfg, rng)
    if m3_params is not None:
        for name, tensor in m3_params.items():
            if name.startswith("music.") and name in params:
                if tensor.data.shape != params[name].data.shape:
                    raise ShapeMismatch(f"{name}: checkpoint shape mismatch")
                params[name] = Tensor(tensor.data.copy(), requires_grad=True)
    state = adamw_init(params)
    tokenizer = tokenizer or HashWordTokenizer(cfg.text_vocab_size)
    policy = policy or SamplerPolicy(
        max_text_tokens=min(128, cfg.text.max_positions))

    losses: list[float] = []
    step = 0
    for _ in range(config.max_epochs):
        for batch_index in _epoch_batches(len(triplets), config.batch_size, rng):
            if len(batch_index) < 2:
                continue  # a singleton batch carries no contrastive signal
            step += 1
            music_seqs = []
            token_lists = []
            for index in batch_index:
                view = sample_view(triplets[index], policy, rng, tokenizer)
                seq = patchize(view.music_text, view.modality)
                music_seqs.append(truncate(seq, cfg.music.max_positions, rng))
                token_lists.append(view.text_tokens or [PAD_TOKEN_ID])

            ids, valid = _pad_patch_batch(music_seqs)
            _, music_vectors = encode_music_batch(ids, valid, params, cfg)
            token_ids, token_valid = _pad_token_batch(token_lists)
            text_vectors = encode_text_batch(token_ids, token_valid, params, cfg)
            loss = infonce_loss(music_vectors, text_vectors,
                                scale=config.logit_scale)

            zero_grads(params)
            loss.backward()
            lr = warmup_learning_rate(config.learning_rate, step, config.warmup_steps)
            optimizer_step(params, collect_grads(params), state, lr,
                           weight_decay=config.weight_decay)
            losses.append(loss.item())
            if max_steps is not None and step >= max_steps:
                return ClampResult(params, losses, cfg)
    return ClampResult(params, losses, cfg)


# -- inference helpers ---------------------------------------------------------------

def music_embedding(text: str, modality: str, params,
                    config: ModelConfig) -> np.ndarray:
    seq = patchize(text, modality)
    if len(seq) > config.music.max_positions:
        seq = PatchSequence(seq.patches[:config.music.max_positions],
                            seq.source_modality)
    ids, valid = _pad_patch_batch([seq])
    _, vector = encode_music_batch(ids, valid, params, config)
    return vector.data[0].copy()


def text_embedding(text: str, tokenizer, params,
                   config: ModelConfig) -> np.ndarray:
    tokens = tokenizer.encode(text)[:config.text.max_positions]
    if not tokens:
        tokens = [PAD_TOKEN_ID]
    ids, valid = _pad_token_batch([tokens])
    return encode_text_batch(ids, valid, params, config).data[0].copy()
