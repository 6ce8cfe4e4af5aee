"""Plain-numpy convolutional Q-network with exact gradients and Adam.

No autograd: the backward pass is written against the forward pass by hand,
which keeps it independently checkable with finite differences. Convolutions
are valid (no padding) with square kernels and use an im2col layout so both
directions are single matmuls plus index bookkeeping.

Parameters live in an ordered name -> array dict; gradients, Adam moments,
and the checkpoint byte layout all follow that same order.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    ArchMismatch,
    CheckpointError,
    ChecksumError,
    InvariantViolation,
    NumericError,
    ShapeError,
    VersionError,
)

MAGIC = b"GPQN"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class NetArch:
    """Network shape: conv stack as (out_channels, kernel, stride) triples,
    then one hidden fully connected layer, then a linear head per action."""

    in_channels: int = 3
    in_size: int = 10
    conv: tuple[tuple[int, int, int], ...] = ((16, 4, 2), (32, 4, 2))
    fc_hidden: int = 64
    n_actions: int = 9

    def conv_dims(self) -> list[tuple[int, int]]:
        """(channels, spatial size) after each conv layer."""
        c, m = self.in_channels, self.in_size
        dims = []
        for cout, k, s in self.conv:
            if k > m:
                raise InvariantViolation(
                    f"kernel {k} larger than feature map {m} at conv layer {len(dims)}"
                )
            m = (m - k) // s + 1
            c = cout
            dims.append((c, m))
        return dims

    def feature_size(self) -> int:
        c, m = self.conv_dims()[-1] if self.conv else (self.in_channels, self.in_size)
        return c * m * m

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        """Parameter names and shapes in storage order."""
        out: list[tuple[str, tuple[int, ...]]] = []
        cin = self.in_channels
        for i, (cout, k, _) in enumerate(self.conv):
            out.append((f"conv{i}_w", (cout, cin * k * k)))
            out.append((f"conv{i}_b", (cout,)))
            cin = cout
        out.append(("fc_w", (self.fc_hidden, self.feature_size())))
        out.append(("fc_b", (self.fc_hidden,)))
        out.append(("out_w", (self.n_actions, self.fc_hidden)))
        out.append(("out_b", (self.n_actions,)))
        return out

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "in_size": self.in_size,
            "conv": [list(layer) for layer in self.conv],
            "fc_hidden": self.fc_hidden,
            "n_actions": self.n_actions,
        }

    @staticmethod
    def from_dict(d: dict) -> "NetArch":
        return NetArch(
            in_channels=int(d["in_channels"]),
            in_size=int(d["in_size"]),
            conv=tuple(tuple(int(v) for v in layer) for layer in d["conv"]),
            fc_hidden=int(d["fc_hidden"]),
            n_actions=int(d["n_actions"]),
        )


@dataclass
class QParams:
    arch: NetArch
    arrays: dict[str, np.ndarray]

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.arrays.values())).dtype

    def copy(self) -> "QParams":
        return QParams(self.arch, {k: v.copy() for k, v in self.arrays.items()})

    def n_params(self) -> int:
        return sum(v.size for v in self.arrays.values())


def init_params(
    arch: NetArch, rng: np.random.Generator, dtype: np.dtype = np.float32
) -> QParams:
    """He-uniform weights (limit sqrt(6 / fan_in)), zero biases. The draw
    order is the storage order, so one seed pins every parameter."""
    arrays: dict[str, np.ndarray] = {}
    for name, shape in arch.layout():
        if name.endswith("_b"):
            arrays[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = shape[1]
            limit = np.sqrt(6.0 / fan_in)
            arrays[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return QParams(arch=arch, arrays=arrays)


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------


def _as_batch(params: QParams, x: np.ndarray) -> tuple[np.ndarray, bool]:
    arch = params.arch
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4 or x.shape[1:] != (arch.in_channels, arch.in_size, arch.in_size):
        raise ShapeError(
            f"expected (*, {arch.in_channels}, {arch.in_size}, {arch.in_size}), "
            f"got {x.shape}"
        )
    return np.ascontiguousarray(x, dtype=params.dtype), single


def _conv_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray, k: int, s: int
) -> tuple[np.ndarray, np.ndarray]:
    batch, cin, h, _ = x.shape
    ho = (h - k) // s + 1
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(batch * ho * ho, cin * k * k)
    pre = cols @ w.T + b
    return pre.reshape(batch, ho, ho, -1).transpose(0, 3, 1, 2), cols


def forward_cached(params: QParams, x: np.ndarray) -> tuple[np.ndarray, dict]:
    """Q-values plus every intermediate the backward pass needs."""
    x, single = _as_batch(params, x)
    arch = params.arch
    cache: dict = {"inputs": [], "cols": [], "pre": [], "single": single}
    h = x
    for i, (_, k, s) in enumerate(arch.conv):
        cache["inputs"].append(h)
        pre, cols = _conv_forward(
            h, params.arrays[f"conv{i}_w"], params.arrays[f"conv{i}_b"], k, s
        )
        cache["cols"].append(cols)
        cache["pre"].append(pre)
        h = np.maximum(pre, 0)
    flat = h.reshape(h.shape[0], -1)
    if flat.shape[1] != arch.feature_size():
        raise ShapeError(f"flattened {flat.shape[1]} != expected {arch.feature_size()}")
    fc_pre = flat @ params.arrays["fc_w"].T + params.arrays["fc_b"]
    hidden = np.maximum(fc_pre, 0)
    q = hidden @ params.arrays["out_w"].T + params.arrays["out_b"]
    if not np.all(np.isfinite(q)):
        raise NumericError("non-finite Q-values")
    cache.update(flat=flat, fc_pre=fc_pre, hidden=hidden)
    return (q[0] if single else q), cache


def forward(params: QParams, x: np.ndarray) -> np.ndarray:
    q, _ = forward_cached(params, x)
    return q


def backward(params: QParams, cache: dict, dq: np.ndarray) -> dict[str, np.ndarray]:
    """Exact parameter gradients given d(loss)/d(q) for the cached batch."""
    arch = params.arch
    if cache["single"] and dq.ndim == 1:
        dq = dq[None]
    dq = np.ascontiguousarray(dq, dtype=params.dtype)
    grads: dict[str, np.ndarray] = {}
    grads["out_w"] = dq.T @ cache["hidden"]
    grads["out_b"] = dq.sum(axis=0)
    dh = (dq @ params.arrays["out_w"]) * (cache["fc_pre"] > 0)
    grads["fc_w"] = dh.T @ cache["flat"]
    grads["fc_b"] = dh.sum(axis=0)
    d = (dh @ params.arrays["fc_w"]).reshape(cache["pre"][-1].shape) if arch.conv else None
    for i in reversed(range(len(arch.conv))):
        _, k, s = arch.conv[i]
        d = d * (cache["pre"][i] > 0)
        batch, cout, ho, _ = d.shape
        dp = d.transpose(0, 2, 3, 1).reshape(batch * ho * ho, cout)
        grads[f"conv{i}_w"] = dp.T @ cache["cols"][i]
        grads[f"conv{i}_b"] = dp.sum(axis=0)
        if i == 0:
            break
        w = params.arrays[f"conv{i}_w"]
        dcols = (dp @ w).reshape(batch, ho, ho, -1, k, k).transpose(0, 3, 1, 2, 4, 5)
        x_prev = cache["inputs"][i]
        dx = np.zeros_like(x_prev)
        for a in range(k):
            for b in range(k):
                dx[:, :, a : a + s * ho : s, b : b + s * ho : s] += dcols[..., a, b]
        d = dx
    return {name: grads[name] for name, _ in arch.layout()}


def loss_and_grads(
    params: QParams,
    x: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared TD error over a batch plus its exact parameter gradients.

    Only the taken action's head output carries error per sample; the other
    eight heads contribute nothing to either the loss or the gradients.
    """
    q, cache = forward_cached(params, x)
    if q.ndim == 1:
        q = q[None]
    acts = np.asarray(actions, dtype=np.int64)
    y = np.asarray(targets, dtype=np.float64)
    if acts.shape != (q.shape[0],) or y.shape != (q.shape[0],):
        raise ShapeError(
            f"batch of {q.shape[0]} needs matching actions/targets, "
            f"got {acts.shape} and {y.shape}"
        )
    if acts.min() < 0 or acts.max() >= q.shape[1]:
        raise ShapeError(f"action index outside [0, {q.shape[1]})")
    if not np.all(np.isfinite(y)):
        raise NumericError("non-finite targets")
    rows = np.arange(q.shape[0])
    delta = q[rows, acts].astype(np.float64) - y
    dq = np.zeros_like(q)
    dq[rows, acts] = (2.0 * delta / q.shape[0]).astype(q.dtype)
    return float(np.mean(delta**2)), backward(params, cache, dq)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @staticmethod
    def zeros_like(params: QParams) -> "AdamState":
        return AdamState(
            m={k: np.zeros_like(a) for k, a in params.arrays.items()},
            v={k: np.zeros_like(a) for k, a in params.arrays.items()},
        )


def adam_step(
    params: QParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, in place."""
    if set(grads) != set(params.arrays):
        raise ShapeError("gradient keys do not match parameters")
    state.step += 1
    t = state.step
    for name, theta in params.arrays.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeError(f"gradient shape {g.shape} != {theta.shape} for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        theta -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(theta.dtype)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path: str, params: QParams, meta: dict | None = None) -> None:
    """Byte-reproducible snapshot: magic, version, JSON header, little-endian
    float32 arrays in layout order, then a SHA-256 of everything before it.
    No timestamps or environment data, so equal runs write equal files."""
    header = {
        "arch": params.arch.to_dict(),
        "layout": [[name, list(shape)] for name, shape in params.arch.layout()],
        "meta": meta or {},
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    blob = bytearray()
    blob += MAGIC
    blob += FORMAT_VERSION.to_bytes(4, "little")
    blob += len(header_bytes).to_bytes(4, "little")
    blob += header_bytes
    for name, shape in params.arch.layout():
        arr = params.arrays[name]
        if tuple(arr.shape) != shape:
            raise ShapeError(f"{name} has shape {arr.shape}, layout says {shape}")
        blob += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    blob += hashlib.sha256(bytes(blob)).digest()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_checkpoint(path: str, expected_arch: NetArch | None = None) -> tuple[QParams, dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 8 + 32:
        raise CheckpointError(f"{path}: truncated checkpoint")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError(f"{path}: SHA-256 mismatch")
    if body[:4] != MAGIC:
        raise VersionError(f"{path}: bad magic {body[:4]!r}")
    version = int.from_bytes(body[4:8], "little")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    hlen = int.from_bytes(body[8:12], "little")
    header = json.loads(body[12 : 12 + hlen].decode())
    arch = NetArch.from_dict(header["arch"])
    if expected_arch is not None and arch != expected_arch:
        raise ArchMismatch(f"{path}: checkpoint arch {arch} != expected {expected_arch}")
    layout = [(name, tuple(shape)) for name, shape in header["layout"]]
    if layout != arch.layout():
        raise ArchMismatch(f"{path}: header layout disagrees with declared arch")
    arrays: dict[str, np.ndarray] = {}
    off = 12 + hlen
    for name, shape in layout:
        n = int(np.prod(shape))
        raw = body[off : off + 4 * n]
        if len(raw) != 4 * n:
            raise CheckpointError(f"{path}: truncated array {name}")
        arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        off += 4 * n
    if off != len(body):
        raise CheckpointError(f"{path}: {len(body) - off} trailing bytes")
    return QParams(arch=arch, arrays=arrays), header["meta"]
