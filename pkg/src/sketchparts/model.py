"""Networks: ViT sketch encoder, part-query transformer decoder with latent and
presence heads, the four training losses, and the masked-slot refiner."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import (
    FeedForward,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    Parameter,
    Tensor,
    multi_head_attention,
)
from .render import SKETCH_SIZE, Sketch

PRESENCE_CLAMP = 1e-7


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 256
    patch: int = 16
    h_d: int = 64
    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 4
    m: int = 8
    d_model: int = 32
    refiner_layers: int = 2

    def __post_init__(self):
        if self.image_size % self.patch != 0:
            raise ValueError("image_size must be a multiple of patch")
        if self.h_d % self.heads != 0 or self.d_model % self.heads != 0:
            raise ValueError("widths must be divisible by head count")
        if self.d_model < 16:
            raise ValueError("d_model must be at least 16")

    @property
    def n_tokens(self) -> int:
        return (self.image_size // self.patch) ** 2

    @property
    def query_dim(self) -> int:
        return round(1.5 * self.h_d)

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "patch": self.patch,
            "h_d": self.h_d,
            "enc_layers": self.enc_layers,
            "dec_layers": self.dec_layers,
            "heads": self.heads,
            "m": self.m,
            "d_model": self.d_model,
            "refiner_layers": self.refiner_layers,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(**d)


def desk_config(**overrides) -> ModelConfig:
    """Laptop-scale defaults used by the smoke suites."""
    return ModelConfig(**overrides)


def full_scale_config(multi_class: bool = False) -> ModelConfig:
    """Production-scale preset (single-class m=16/d=512, multi-class m=32/d=768)."""
    if multi_class:
        return ModelConfig(h_d=512, enc_layers=8, dec_layers=12, heads=8, m=32,
                           d_model=768, refiner_layers=4)
    return ModelConfig(h_d=512, enc_layers=8, dec_layers=12, heads=8, m=16,
                       d_model=512, refiner_layers=4)


@dataclass
class Prediction:
    z: np.ndarray  # (m, d_model) predicted latents
    c: np.ndarray  # (m,) presence scores strictly inside (0, 1)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        if np.any(self.c <= 0) or np.any(self.c >= 1):
            raise ValueError("presence scores must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class RefineMask:
    bits: tuple  # m ints, 1 = masked/to-regenerate

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(int(b) for b in self.bits))
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("mask bits must be 0 or 1")

    @property
    def count(self) -> int:
        return sum(self.bits)

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.float64)


# -- blocks ------------------------------------------------------------------------


class EncoderBlock(Module):
    """Pre-norm: x + attn(norm(x)), then x + ffn(norm(x))."""

    def __init__(self, rng, width, heads):
        self.norm1 = LayerNorm(width)
        self.attn = MultiHeadAttention(rng, width, heads)
        self.norm2 = LayerNorm(width)
        self.ffn = FeedForward(rng, width, 4 * width)

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.ffn(self.norm2(x))


class DecoderBlock(Module):
    """Query self-attention, cross-attention to the visual tokens, feed-forward."""

    def __init__(self, rng, width, heads):
        self.norm1 = LayerNorm(width)
        self.self_attn = MultiHeadAttention(rng, width, heads)
        self.norm2 = LayerNorm(width)
        self.cross_attn = MultiHeadAttention(rng, width, heads)
        self.norm3 = LayerNorm(width)
        self.ffn = FeedForward(rng, width, 4 * width)

    def __call__(self, q: Tensor, keys: Tensor, values: Tensor) -> Tensor:
        q = q + self.self_attn(self.norm1(q))
        ca = self.cross_attn
        attended = multi_head_attention(
            ca.q_proj(self.norm2(q)), ca.k_proj(keys), ca.v_proj(values), ca.heads
        )
        q = q + ca.out_proj(attended)
        return q + self.ffn(self.norm3(q))


class SketchToPartsModel(Module):
    """ViT encoder over 16x16 patches plus a part-query decoder.

    The m learned queries live at 1.5*h_d and are projected to the decoder
    width; cross-attention keys carry the patch positional encoding so token
    order matters; each query row maps through a ReLU MLP to its latent and the
    latent through a second MLP to its presence score.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        patch_dim = cfg.patch * cfg.patch
        self.patch_proj = Linear(rng, patch_dim, cfg.h_d)
        self.pos_embed = Parameter(rng.normal(0.0, 0.02, size=(cfg.n_tokens, cfg.h_d)))
        self.enc_blocks = [EncoderBlock(rng, cfg.h_d, cfg.heads) for _ in range(cfg.enc_layers)]
        self.enc_norm = LayerNorm(cfg.h_d)

        self.queries = Parameter(rng.normal(0.0, 0.02, size=(cfg.m, cfg.query_dim)))
        self.query_proj = Linear(rng, cfg.query_dim, cfg.h_d)
        self.dec_blocks = [DecoderBlock(rng, cfg.h_d, cfg.heads) for _ in range(cfg.dec_layers)]
        self.dec_norm = LayerNorm(cfg.h_d)

        self.latent_fc1 = Linear(rng, cfg.h_d, cfg.h_d)
        self.latent_fc2 = Linear(rng, cfg.h_d, cfg.d_model)
        half = max(1, cfg.d_model // 2)
        self.presence_fc1 = Linear(rng, cfg.d_model, half)
        self.presence_fc2 = Linear(rng, half, 1)

    # -- ops ----------------------------------------------------------------

    def patchify(self, pixels: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        g = cfg.image_size // cfg.patch
        if pixels.ndim == 3 and pixels.shape[1:] == (cfg.image_size, cfg.image_size):
            b = pixels.shape[0]
            tiles = pixels.reshape(b, g, cfg.patch, g, cfg.patch).transpose(0, 1, 3, 2, 4)
            return tiles.reshape(b, cfg.n_tokens, cfg.patch * cfg.patch)
        if pixels.shape != (cfg.image_size, cfg.image_size):
            raise ValueError(f"expected {cfg.image_size}x{cfg.image_size} sketch, got {pixels.shape}")
        tiles = pixels.reshape(g, cfg.patch, g, cfg.patch).transpose(0, 2, 1, 3)
        return tiles.reshape(cfg.n_tokens, cfg.patch * cfg.patch)

    def encode_sketch(self, sketch: "Sketch | np.ndarray") -> Tensor:
        """Token embeddings for one sketch (n_tokens, h_d) or, given a stacked
        pixel array, for a whole batch (b, n_tokens, h_d)."""
        pixels = sketch.pixels if isinstance(sketch, Sketch) else np.asarray(sketch, dtype=np.float64)
        tokens = Tensor(self.patchify(pixels))
        x = self.patch_proj(tokens) + self.pos_embed
        for block in self.enc_blocks:
            x = block(x)
        return self.enc_norm(x)

    def predict_parts(self, emb: Tensor) -> tuple:
        """Returns (z_tilde (m, d_model), c_tilde (m,)) for a single embedding,
        with a leading batch axis on both when emb carries one."""
        cfg = self.cfg
        batched = emb.ndim == 3
        if emb.shape[-2:] != (cfg.n_tokens, cfg.h_d) or emb.ndim not in (2, 3):
            raise ValueError(f"embeddings must be (..., {cfg.n_tokens}, {cfg.h_d}), got {emb.shape}")
        keys = emb + self.pos_embed  # token order sensitivity lives here
        q = self.query_proj(self.queries)
        if batched:
            # broadcast the shared queries across the batch; the zero addend
            # routes the summed gradient back through _unbroadcast
            q = q.reshape(1, cfg.m, cfg.h_d) + Tensor(np.zeros((emb.shape[0], 1, 1)))
        for block in self.dec_blocks:
            q = block(q, keys, emb)
        q = self.dec_norm(q)
        z = self.latent_fc2(self.latent_fc1(q).relu())
        logits = self.presence_fc2(self.presence_fc1(z).relu())
        shape = (emb.shape[0], cfg.m) if batched else (cfg.m,)
        c = logits.reshape(*shape).sigmoid().clamp(PRESENCE_CLAMP, 1.0 - PRESENCE_CLAMP)
        return z, c

    def forward(self, sketch) -> tuple:
        return self.predict_parts(self.encode_sketch(sketch))

    def predict(self, sketch) -> Prediction:
        z, c = self.forward(sketch)
        return Prediction(z.data.copy(), c.data.copy())


class RefinerModel(Module):
    """Bidirectional transformer over the m latent slots; learned per-slot
    positional encodings distinguish otherwise identical zeroed rows."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.pos_embed = Parameter(rng.normal(0.0, 0.02, size=(cfg.m, cfg.d_model)))
        self.blocks = [
            EncoderBlock(rng, cfg.d_model, cfg.heads) for _ in range(cfg.refiner_layers)
        ]
        self.norm = LayerNorm(cfg.d_model)
        self.out = Linear(rng, cfg.d_model, cfg.d_model)

    def refine(self, z_input: "Tensor | np.ndarray", mask: RefineMask) -> Tensor:
        cfg = self.cfg
        x = z_input if isinstance(z_input, Tensor) else Tensor(np.asarray(z_input, dtype=np.float64))
        if x.shape != (cfg.m, cfg.d_model):
            raise ValueError(f"latents must be ({cfg.m}, {cfg.d_model}), got {x.shape}")
        if len(mask.bits) != cfg.m:
            raise ValueError("mask length must equal m")
        masked_rows = x.data[np.array(mask.bits, dtype=bool)]
        if masked_rows.size and np.any(masked_rows != 0.0):
            raise ValueError("masked rows of the refiner input must be zeroed")
        x = x + self.pos_embed
        for block in self.blocks:
            x = block(x)
        return self.out(self.norm(x))


# -- losses --------------------------------------------------------------------------


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _row_l1(a: Tensor, b: Tensor) -> Tensor:
    return (a - b).abs().sum(axis=1)


def loss_full(z_pred, z_true) -> Tensor:
    """Mean per-slot L1: (1/m) sum_i ||z_pred_i - z_true_i||_1."""
    zp, zt = _as_tensor(z_pred), _as_tensor(z_true)
    if zp.shape != zt.shape or zp.ndim != 2:
        raise ValueError(f"latent shapes must match, got {zp.shape} vs {zt.shape}")
    m = zp.shape[0]
    ones = Tensor(np.ones(m))
    return (_row_l1(zp, zt) * ones).sum() * (1.0 / m)


def loss_cls(c_pred, c_true) -> Tensor:
    """Mean binary cross entropy over the m presence slots."""
    cp, ct = _as_tensor(c_pred), _as_tensor(c_true)
    if cp.shape != ct.shape or cp.ndim != 1:
        raise ValueError(f"presence shapes must match, got {cp.shape} vs {ct.shape}")
    if not np.all((ct.data == 0) | (ct.data == 1)):
        raise ValueError("target presence flags must be binary")
    m = cp.shape[0]
    p = cp.clamp(PRESENCE_CLAMP, 1.0 - PRESENCE_CLAMP)
    one = Tensor(np.ones(m))
    ll = ct * p.log() + (one - ct) * (one - p).log()
    return ll.sum() * (-1.0 / m)


def loss_part(z_pred, z_true, c_true) -> Tensor:
    """L1 restricted to present slots, normalized by how many there are."""
    zp, zt, ct = _as_tensor(z_pred), _as_tensor(z_true), _as_tensor(c_true)
    if zp.shape != zt.shape or zp.ndim != 2:
        raise ValueError(f"latent shapes must match, got {zp.shape} vs {zt.shape}")
    if ct.shape != (zp.shape[0],):
        raise ValueError("presence vector must have one flag per slot")
    if not np.all((ct.data == 0) | (ct.data == 1)):
        raise ValueError("presence flags must be binary")
    k = float(ct.data.sum())
    if k == 0:
        return Tensor(0.0)
    return (_row_l1(zp, zt) * ct).sum() * (1.0 / k)


def loss_refine(z_hat, z_true, mask: RefineMask) -> Tensor:
    """L1 over the masked slots only, normalized by the mask popcount."""
    if mask.count < 1:
        raise ValueError("refine loss needs at least one masked slot")
    zh, zt = _as_tensor(z_hat), _as_tensor(z_true)
    if zh.shape != zt.shape or zh.ndim != 2:
        raise ValueError(f"latent shapes must match, got {zh.shape} vs {zt.shape}")
    if len(mask.bits) != zh.shape[0]:
        raise ValueError("mask length must equal slot count")
    bits = Tensor(mask.as_array())
    return (_row_l1(zh, zt) * bits).sum() * (1.0 / mask.count)


# -- mask sampling and completion flags --------------------------------------------------


def sample_mask(seed: int, m: int) -> RefineMask:
    """Mask k = max(1, round(u*m)) distinct slots, u ~ Uniform[0.05, 0.40]."""
    if m < 3:
        raise ValueError("m must be at least 3")
    rng = np.random.default_rng(seed)
    u = rng.uniform(0.05, 0.40)
    k = max(1, round(u * m))
    idx = rng.choice(m, size=k, replace=False)
    bits = [0] * m
    for i in idx:
        bits[int(i)] = 1
    return RefineMask(tuple(bits))


def flag_completed(c_pred: np.ndarray, threshold: float = 0.01) -> np.ndarray:
    """True where the presence score is strictly below the threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return np.asarray(c_pred, dtype=np.float64) < threshold
