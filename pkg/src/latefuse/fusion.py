"""Late fusion of text and pooled-image vectors into one document vector.

Two heads are supported:

* weighted_sum:  alpha * text + (1 - alpha) * img, alpha in [0, 1]
* mlp:           w2 @ relu(w1 @ concat(text, img) + b1) + b2

alpha is carried as a raw logit (alpha = sigmoid(alpha_raw)) and the loss-side
logit scale as a log (scale = exp(log_scale)), so gradient steps can never
leave the feasible region. Forward and gradient evaluation are analytic; no
autodiff framework is involved.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MODES = ("weighted_sum", "mlp")

CKPT_MAGIC = b"LFCK"


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


@dataclass
class FusionParams:
    mode: str
    dim: int
    hidden: int = 0
    alpha_raw: float = 0.0          # weighted_sum only
    log_scale: float = 0.0          # loss-side logit scale, scale = exp(log_scale)
    bias: float = 0.0               # loss-side logit bias
    w1: np.ndarray | None = None    # (hidden, 2*dim)
    b1: np.ndarray | None = None    # (hidden,)
    w2: np.ndarray | None = None    # (dim, hidden)
    b2: np.ndarray | None = None    # (dim,)
    train_scale_bias: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown fusion mode: {self.mode!r}")
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.mode == "mlp":
            if self.hidden <= 0:
                raise ValueError("mlp mode requires hidden > 0")
            for name, arr, shape in [
                ("w1", self.w1, (self.hidden, 2 * self.dim)),
                ("b1", self.b1, (self.hidden,)),
                ("w2", self.w2, (self.dim, self.hidden)),
                ("b2", self.b2, (self.dim,)),
            ]:
                if arr is None:
                    raise ValueError(f"mlp mode requires {name}")
                if arr.shape != shape:
                    raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")

    @property
    def alpha(self) -> float:
        return float(sigmoid(self.alpha_raw))

    @property
    def scale(self) -> float:
        return float(np.exp(self.log_scale))

    @classmethod
    def weighted_sum(cls, dim: int, alpha: float = 0.5,
                     scale: float = 10.0, bias: float = -5.0,
                     train_scale_bias: bool = True) -> "FusionParams":
        if not 0.0 < alpha < 1.0:
            raise ValueError("initial alpha must lie strictly inside (0, 1)")
        alpha_raw = float(np.log(alpha / (1.0 - alpha)))
        return cls(mode="weighted_sum", dim=dim, alpha_raw=alpha_raw,
                   log_scale=float(np.log(scale)), bias=float(bias),
                   train_scale_bias=train_scale_bias)

    @classmethod
    def mlp(cls, dim: int, hidden: int | None = None, seed: int = 0,
            scale: float = 10.0, bias: float = -5.0,
            train_scale_bias: bool = True) -> "FusionParams":
        """Symmetric uniform fan-in init, zero biases."""
        hidden = dim if hidden is None else hidden
        rng = np.random.default_rng(seed)
        lim1 = 1.0 / np.sqrt(2 * dim)
        lim2 = 1.0 / np.sqrt(hidden)
        return cls(
            mode="mlp", dim=dim, hidden=hidden,
            w1=rng.uniform(-lim1, lim1, size=(hidden, 2 * dim)),
            b1=np.zeros(hidden),
            w2=rng.uniform(-lim2, lim2, size=(dim, hidden)),
            b2=np.zeros(dim),
            log_scale=float(np.log(scale)), bias=float(bias),
            train_scale_bias=train_scale_bias,
        )

    def copy(self) -> "FusionParams":
        return FusionParams(
            mode=self.mode, dim=self.dim, hidden=self.hidden,
            alpha_raw=self.alpha_raw, log_scale=self.log_scale, bias=self.bias,
            w1=None if self.w1 is None else self.w1.copy(),
            b1=None if self.b1 is None else self.b1.copy(),
            w2=None if self.w2 is None else self.w2.copy(),
            b2=None if self.b2 is None else self.b2.copy(),
            train_scale_bias=self.train_scale_bias,
        )


def fuse(text_vec, img_vec, params: FusionParams) -> np.ndarray:
    """Fused document vector for one (text, pooled-image) pair."""
    t = np.asarray(text_vec, dtype=np.float64)
    g = np.asarray(img_vec, dtype=np.float64)
    if t.shape != (params.dim,) or g.shape != (params.dim,):
        raise ValueError(
            f"dimension mismatch: text {t.shape}, img {g.shape}, expected ({params.dim},)"
        )
    if params.mode == "weighted_sum":
        a = params.alpha
        return a * t + (1.0 - a) * g
    z = np.concatenate([t, g])
    h = np.maximum(params.w1 @ z + params.b1, 0.0)
    return params.w2 @ h + params.b2


def fuse_batch(text_mat, img_mat, params: FusionParams) -> np.ndarray:
    """Row-wise fuse over (B, d) matrices."""
    T = np.asarray(text_mat, dtype=np.float64)
    G = np.asarray(img_mat, dtype=np.float64)
    if T.shape != G.shape or T.ndim != 2 or T.shape[1] != params.dim:
        raise ValueError(f"batch shape mismatch: {T.shape} vs {G.shape}, dim={params.dim}")
    if params.mode == "weighted_sum":
        a = params.alpha
        return a * T + (1.0 - a) * G
    Z = np.concatenate([T, G], axis=1)           # (B, 2d)
    H = np.maximum(Z @ params.w1.T + params.b1, 0.0)
    return H @ params.w2.T + params.b2


@dataclass
class FuseGrads:
    """Gradients of <upstream, fuse(text, img, params)>."""

    text: np.ndarray
    img: np.ndarray
    alpha: float = 0.0
    alpha_raw: float = 0.0
    w1: np.ndarray | None = None
    b1: np.ndarray | None = None
    w2: np.ndarray | None = None
    b2: np.ndarray | None = None


def fuse_grad(text_vec, img_vec, params: FusionParams, upstream) -> FuseGrads:
    """Exact analytic gradients of <upstream, fuse(...)> w.r.t. params and inputs."""
    t = np.asarray(text_vec, dtype=np.float64)
    g = np.asarray(img_vec, dtype=np.float64)
    u = np.asarray(upstream, dtype=np.float64)
    if t.shape != (params.dim,) or g.shape != (params.dim,) or u.shape != (params.dim,):
        raise ValueError("dimension mismatch in fuse_grad")
    if params.mode == "weighted_sum":
        a = params.alpha
        d_alpha = float(u @ (t - g))
        return FuseGrads(
            text=a * u, img=(1.0 - a) * u,
            alpha=d_alpha, alpha_raw=d_alpha * a * (1.0 - a),
        )
    z = np.concatenate([t, g])
    pre = params.w1 @ z + params.b1
    h = np.maximum(pre, 0.0)
    d_h = params.w2.T @ u
    d_pre = d_h * (pre > 0.0)
    d_z = params.w1.T @ d_pre
    return FuseGrads(
        text=d_z[: params.dim], img=d_z[params.dim:],
        w1=np.outer(d_pre, z), b1=d_pre,
        w2=np.outer(u, h), b2=u,
    )


def cosine(a, b) -> float:
    """Cosine similarity, computed in 64-bit."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine undefined for zero vectors")
    return float(a @ b / (na * nb))


def save_params(params: FusionParams, path) -> None:
    """JSON header + raw float32 payload for MLP weights."""
    header = {
        "mode": params.mode,
        "dim": params.dim,
        "hidden": params.hidden,
        "alpha_raw": params.alpha_raw,
        "log_scale": params.log_scale,
        "bias": params.bias,
        "train_scale_bias": params.train_scale_bias,
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", len(raw)))
        f.write(raw)
        if params.mode == "mlp":
            for arr in (params.w1, params.b1, params.w2, params.b2):
                f.write(arr.astype("<f4").tobytes())


def load_params(path) -> FusionParams:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != CKPT_MAGIC:
        raise ValueError(f"bad checkpoint magic: {data[:4]!r}")
    (n,) = struct.unpack_from("<I", data, 4)
    header = json.loads(data[8:8 + n].decode("utf-8"))
    off = 8 + n
    kwargs = dict(
        mode=header["mode"], dim=header["dim"], hidden=header["hidden"],
        alpha_raw=header["alpha_raw"], log_scale=header["log_scale"],
        bias=header["bias"], train_scale_bias=header.get("train_scale_bias", True),
    )
    if header["mode"] == "mlp":
        d, h = header["dim"], header["hidden"]
        shapes = [("w1", (h, 2 * d)), ("b1", (h,)), ("w2", (d, h)), ("b2", (d,))]
        for name, shape in shapes:
            count = int(np.prod(shape))
            arr = np.frombuffer(data, dtype="<f4", count=count, offset=off)
            kwargs[name] = arr.reshape(shape).astype(np.float64)
            off += count * 4
    return FusionParams(**kwargs)
