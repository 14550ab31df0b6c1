"""Minimal reverse-mode autodiff engine and the layer set used by the model.

Everything runs in float64 numpy on CPU. Tensors are immutable once created
during a forward pass; calling backward() on a scalar tensor fills .grad on
every reachable tensor with requires_grad=True.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "softmax",
    "multi_head_attention",
    "LrSchedule",
    "warmup_lr",
    "grad_check",
    "Linear",
    "LayerNorm",
    "MultiHeadAttention",
    "FeedForward",
    "Adam",
    "save_checkpoint",
    "load_checkpoint",
    "glorot_uniform",
]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


class Tensor:
    """A float64 array plus the tape hooks needed for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _from_op(data, parents, backward):
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _accumulate(self, g: np.ndarray):
        # grads are never mutated in place (accumulation rebinds), so adopting
        # the incoming array is safe and avoids a copy per graph node
        if self.grad is None:
            self.grad = np.asarray(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    def backward(self):
        """Backpropagate from this scalar through the recorded graph."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in seen:
                continue
            if expanded:
                seen.add(id(node))
                topo.append(node)
                continue
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def zero_grad(self):
        self.grad = None

    # -- arithmetic ----------------------------------------------------------

    @staticmethod
    def _coerce(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    def __add__(self, other):
        other = Tensor._coerce(other)

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.shape))

        return Tensor._from_op(self.data + other.data, (self, other), backward)

    __radd__ = __add__

    def __sub__(self, other):
        other = Tensor._coerce(other)

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-g, other.shape))

        return Tensor._from_op(self.data - other.data, (self, other), backward)

    def __mul__(self, other):
        other = Tensor._coerce(other)

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.shape))

        return Tensor._from_op(self.data * other.data, (self, other), backward)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __truediv__(self, other):
        other = Tensor._coerce(other)

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(-g * self.data / (other.data**2), other.shape)
                )

        return Tensor._from_op(self.data / other.data, (self, other), backward)

    def __matmul__(self, other):
        other = Tensor._coerce(other)
        if self.ndim < 2 or other.ndim < 2:
            raise ValueError("matmul operands must have at least 2 dimensions")

        def backward(g):
            if self.requires_grad:
                ga = np.matmul(g, np.swapaxes(other.data, -1, -2))
                self._accumulate(_unbroadcast(ga, self.shape))
            if other.requires_grad:
                gb = np.matmul(np.swapaxes(self.data, -1, -2), g)
                other._accumulate(_unbroadcast(gb, other.shape))

        return Tensor._from_op(np.matmul(self.data, other.data), (self, other), backward)

    def pow(self, p: float):
        """Elementwise power with constant exponent (data must stay positive for p<1)."""

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * p * self.data ** (p - 1.0))

        return Tensor._from_op(self.data**p, (self,), backward)

    def sqrt(self):
        return self.pow(0.5)

    # -- shape ops -----------------------------------------------------------

    def reshape(self, *shape):
        old = self.shape

        def backward(g):
            if self.requires_grad:
                self._accumulate(g.reshape(old))

        return Tensor._from_op(self.data.reshape(*shape), (self,), backward)

    def transpose(self, *axes):
        inv = np.argsort(axes)

        def backward(g):
            if self.requires_grad:
                self._accumulate(g.transpose(inv))

        return Tensor._from_op(self.data.transpose(axes), (self,), backward)

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        def backward(g):
            if not self.requires_grad:
                return
            if axis is None:
                self._accumulate(np.broadcast_to(g, self.shape).copy())
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(gg, self.shape).copy())

        return Tensor._from_op(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- elementwise nonlinearities -------------------------------------------

    def abs(self):
        def backward(g):
            if self.requires_grad:
                self._accumulate(g * np.sign(self.data))

        return Tensor._from_op(np.abs(self.data), (self,), backward)

    def log(self):
        def backward(g):
            if self.requires_grad:
                self._accumulate(g / self.data)

        return Tensor._from_op(np.log(self.data), (self,), backward)

    def exp(self):
        out_data = np.exp(self.data)

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * out_data)

        return Tensor._from_op(out_data, (self,), backward)

    def relu(self):
        def backward(g):
            if self.requires_grad:
                self._accumulate(g * (self.data > 0))

        return Tensor._from_op(np.maximum(self.data, 0.0), (self,), backward)

    def gelu(self):
        """Tanh-approximation GELU; the derivative below matches the approximation."""
        c = math.sqrt(2.0 / math.pi)
        x = self.data
        x2 = x * x  # np.power on float64 is an order of magnitude slower
        t = np.tanh(c * (x + 0.044715 * (x2 * x)))

        def backward(g):
            if self.requires_grad:
                # d = 0.5*(1 + t) + 0.5*x*(1 - t^2)*dinner, built in place
                # because FFN hiddens make these buffers large
                dinner = x2 * (3 * 0.044715)
                dinner += 1.0
                dinner *= c
                d = t * t
                np.subtract(1.0, d, out=d)
                d *= dinner
                d *= x
                d += t
                d += 1.0
                d *= 0.5
                d *= g
                self._accumulate(d)

        out = t + 1.0
        out *= x
        out *= 0.5
        return Tensor._from_op(out, (self,), backward)

    def sigmoid(self):
        s = 1.0 / (1.0 + np.exp(-self.data))

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * s * (1.0 - s))

        return Tensor._from_op(s, (self,), backward)

    def tanh(self):
        t = np.tanh(self.data)

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * (1.0 - t**2))

        return Tensor._from_op(t, (self,), backward)

    def clamp(self, lo: float, hi: float):
        """Clamp values; gradient passes through only where the clamp is inactive."""
        inside = (self.data >= lo) & (self.data <= hi)

        def backward(g):
            if self.requires_grad:
                self._accumulate(g * inside)

        return Tensor._from_op(np.clip(self.data, lo, hi), (self,), backward)


class Parameter(Tensor):
    """A trainable tensor."""

    def __init__(self, data):
        super().__init__(data, requires_grad=True)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along `axis` (max subtraction)."""
    nd = x.ndim
    if not -nd <= axis < nd:
        raise ValueError(f"axis {axis} invalid for shape {x.shape}")
    # attention logits get large; reuse the shifted buffer instead of
    # allocating exp and quotient separately
    y = x.data - x.data.max(axis=axis, keepdims=True)
    np.exp(y, out=y)
    y /= y.sum(axis=axis, keepdims=True)

    def backward(g):
        if x.requires_grad:
            dot = (g * y).sum(axis=axis, keepdims=True)
            tmp = g - dot
            tmp *= y
            x._accumulate(tmp)

    return Tensor._from_op(y, (x,), backward)


def multi_head_attention(queries: Tensor, keys: Tensor, values: Tensor, heads: int) -> Tensor:
    """Scaled dot-product attention with `heads` parallel heads, no projections.

    queries: [q, d] or [b, q, d]; keys/values: [k, d] or [b, k, d] with the
    same leading batch. Returns the queries' shape. The wrapping layer
    supplies the learned projections.
    """
    d = queries.shape[-1]
    k = keys.shape[-2]
    if d % heads != 0:
        raise ValueError(f"width {d} not divisible by {heads} heads")
    dh = d // heads
    scale = 1.0 / math.sqrt(dh)
    # a power-of-two scale commutes with IEEE rounding, so it can be folded
    # into the (small) query tensor before the matmul instead of rescaling
    # the (large) [.., q, k] logits afterwards; results are bit-identical
    fold = math.log2(scale).is_integer()
    if queries.ndim == 2:
        q = queries.shape[0]
        # [q, d] -> [heads, q, dh]
        qh = queries.reshape(q, heads, dh).transpose(1, 0, 2)
        kh = keys.reshape(k, heads, dh).transpose(1, 0, 2)
        vh = values.reshape(k, heads, dh).transpose(1, 0, 2)
        if fold:
            logits = (qh * scale) @ kh.transpose(0, 2, 1)
        else:
            logits = (qh @ kh.transpose(0, 2, 1)) * scale
        attn = softmax(logits, axis=-1)
        out = attn @ vh  # [heads, q, dh]
        return out.transpose(1, 0, 2).reshape(q, d)
    if queries.ndim != 3 or keys.ndim != 3 or values.ndim != 3:
        raise ValueError("attention expects matching 2-D or 3-D operands")
    b, q = queries.shape[0], queries.shape[1]
    # [b, q, d] -> [b, heads, q, dh]
    qh = queries.reshape(b, q, heads, dh).transpose(0, 2, 1, 3)
    kh = keys.reshape(b, k, heads, dh).transpose(0, 2, 1, 3)
    vh = values.reshape(b, k, heads, dh).transpose(0, 2, 1, 3)
    if fold:
        logits = (qh * scale) @ kh.transpose(0, 1, 3, 2)
    else:
        logits = (qh @ kh.transpose(0, 1, 3, 2)) * scale
    attn = softmax(logits, axis=-1)
    out = attn @ vh  # [b, heads, q, dh]
    return out.transpose(0, 2, 1, 3).reshape(b, q, d)


# -- learning-rate schedule ----------------------------------------------------


@dataclass
class LrSchedule:
    """Linear warmup from lr_start to lr_end over warmup_epochs, then flat."""

    lr_start: float = 1e-7
    lr_end: float = 1e-6
    warmup_epochs: int = 1

    def __post_init__(self):
        if self.lr_start > self.lr_end:
            raise ValueError("lr_start must not exceed lr_end")
        if self.warmup_epochs < 1:
            raise ValueError("warmup_epochs must be >= 1")


def warmup_lr(epoch: int, schedule: LrSchedule) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if epoch >= schedule.warmup_epochs:
        return schedule.lr_end
    frac = epoch / schedule.warmup_epochs
    return schedule.lr_start + (schedule.lr_end - schedule.lr_start) * frac


# -- gradient checking ---------------------------------------------------------


def grad_check(f, x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    f maps a Tensor to a scalar Tensor. Error per coordinate is
    |analytic - numeric| / max(1, |analytic|).
    """
    x.requires_grad = True
    x.zero_grad()
    out = f(x)
    if not np.all(np.isfinite(out.data)):
        raise FloatingPointError("function value is not finite")
    out.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    flat = x.data.reshape(-1)
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(f(Tensor(x.data)).data)
        flat[i] = orig - eps
        lo = float(f(Tensor(x.data)).data)
        flat[i] = orig
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise FloatingPointError("function not finite near x")
        numeric[i] = (hi - lo) / (2.0 * eps)
    numeric = numeric.reshape(x.data.shape)
    denom = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / denom)) if flat.size else 0.0


# -- initialization ------------------------------------------------------------


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-a, a, size=shape)


# -- layers --------------------------------------------------------------------


class Module:
    """Base with recursive named-parameter discovery for optimizers/checkpoints."""

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        out = []
        for name, val in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(val, Parameter):
                out.append((key, val))
            elif isinstance(val, Module):
                out.extend(val.named_parameters(prefix=f"{key}."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(prefix=f"{key}.{i}."))
                    elif isinstance(item, Parameter):
                        out.append((f"{key}.{i}", item))
        return out

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def load_state(self, state: dict):
        """Copy arrays from a {name: ndarray} mapping into this module's parameters."""
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        if missing:
            raise KeyError(f"checkpoint missing parameters: {sorted(missing)[:4]}...")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
            p.data = arr.copy()

    def state(self) -> dict:
        return {name: p.data.copy() for name, p in self.named_parameters()}


class Linear(Module):
    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int):
        self.w = Parameter(glorot_uniform(rng, n_in, n_out))
        self.b = Parameter(np.zeros(n_out))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


class LayerNorm(Module):
    """Normalization over the last axis, composed from primitive ops."""

    def __init__(self, width: int, eps: float = 1e-6):
        self.gamma = Parameter(np.ones(width))
        self.beta = Parameter(np.zeros(width))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        xhat = centered / (var + self.eps).sqrt()
        return xhat * self.gamma + self.beta


class MultiHeadAttention(Module):
    """Projections around the functional attention op; query/key/value may differ."""

    def __init__(self, rng: np.random.Generator, width: int, heads: int, kv_width: int | None = None):
        if width % heads != 0:
            raise ValueError(f"width {width} not divisible by {heads} heads")
        kv_width = width if kv_width is None else kv_width
        self.heads = heads
        self.q_proj = Linear(rng, width, width)
        self.k_proj = Linear(rng, kv_width, width)
        self.v_proj = Linear(rng, kv_width, width)
        self.out_proj = Linear(rng, width, width)

    def __call__(self, x: Tensor, memory: Tensor | None = None) -> Tensor:
        mem = x if memory is None else memory
        q = self.q_proj(x)
        k = self.k_proj(mem)
        v = self.v_proj(mem)
        return self.out_proj(multi_head_attention(q, k, v, self.heads))


class FeedForward(Module):
    def __init__(self, rng: np.random.Generator, width: int, hidden: int):
        self.fc1 = Linear(rng, width, hidden)
        self.fc2 = Linear(rng, hidden, width)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.fc1(x).gelu())


# -- optimizer -----------------------------------------------------------------


class Adam:
    """Adaptive-moment optimizer, beta=(0.9, 0.999), eps=1e-8."""

    def __init__(self, params: list[Parameter], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            mhat = self.m[i] / (1 - self.b1**self.t)
            vhat = self.v[i] / (1 - self.b2**self.t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def state_dict(self) -> dict:
        """Moment estimates and step count, for resuming across runs."""
        return {"t": self.t,
                "m": [np.array(x) for x in self.m],
                "v": [np.array(x) for x in self.v]}

    def load_state_dict(self, state: dict) -> None:
        m, v = state["m"], state["v"]
        if len(m) != len(self.params) or len(v) != len(self.params):
            raise ValueError("optimizer state does not match parameter list")
        for x, y, p in zip(m, v, self.params):
            if x.shape != p.data.shape or y.shape != p.data.shape:
                raise ValueError("optimizer state does not match parameter shapes")
        self.t = int(state["t"])
        self.m = [np.array(x) for x in m]
        self.v = [np.array(x) for x in v]


# -- checkpoint container --------------------------------------------------------
#
# Byte layout (all integers little-endian):
#   bytes 0..7   magic b"PRTSCKPT"
#   bytes 8..11  uint32 header length H
#   bytes 12..   H bytes of UTF-8 JSON:
#                {"format_version": 1, "model_config": {...},
#                 "tensors": [{"name": str, "shape": [int,...]}, ...]}
#   then, for each tensor in listed order, its row-major float64 payload.

_CKPT_MAGIC = b"PRTSCKPT"
CKPT_FORMAT_VERSION = 1


def save_checkpoint(path, named_arrays: dict, model_config: dict):
    tensors = [{"name": k, "shape": list(v.shape)} for k, v in named_arrays.items()]
    header = json.dumps(
        {"format_version": CKPT_FORMAT_VERSION, "model_config": model_config, "tensors": tensors}
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for k in named_arrays:
            f.write(np.ascontiguousarray(named_arrays[k], dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict, dict]:
    """Returns (model_config, {name: float64 array})."""
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != _CKPT_MAGIC:
            raise ValueError(f"not a checkpoint file: bad magic {magic!r}")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        if header.get("format_version") != CKPT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('format_version')}")
        arrays = {}
        for spec in header["tensors"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"checkpoint truncated while reading {spec['name']}")
            arrays[spec["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(np.float64)
    return header["model_config"], arrays
