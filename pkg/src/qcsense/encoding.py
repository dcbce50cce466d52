"""Pixel <-> qubit angle encoding with a tunable midpoint."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qcore import GateOp, StateVector, apply_gate, ry

EPS = 1e-12


def _check_unit(name: str, x, open_interval: bool = False) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    if open_interval:
        if np.any(arr <= 0) or np.any(arr >= 1):
            raise ValueError(f"{name} must lie strictly inside (0, 1)")
    elif np.any(arr < 0) or np.any(arr > 1):
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr


def as_signal(y) -> np.ndarray:
    """Validate a pixel vector (all entries in [0, 1])."""
    arr = _check_unit("signal pixels", y)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("signal must be a non-empty 1-D vector")
    return arr


@dataclass(frozen=True)
class PixelMap:
    """Per-pixel midpoints v: the pixel value that encodes to an equal superposition."""

    midpoints: np.ndarray

    def __post_init__(self):
        v = _check_unit("midpoints", np.atleast_1d(self.midpoints), open_interval=True)
        v = v.astype(float).copy()
        v.setflags(write=False)
        object.__setattr__(self, "midpoints", v)

    @classmethod
    def uniform(cls, n: int, v: float = 0.5) -> "PixelMap":
        return cls(np.full(n, v))

    def __len__(self):
        return self.midpoints.size


def f_v(x, v):
    """Midpoint rescaling: f_v(0)=0, f_v(v)=1/2, f_v(1)=1, identity at v=1/2."""
    x = _check_unit("x", x)
    v = _check_unit("v", v, open_interval=True)
    xc = np.clip(x, EPS, 1 - EPS)
    out = 0.5 * (1 + (2 / np.pi) * np.arctan(np.tan(np.pi * (xc - 0.5)) - np.tan(np.pi * (v - 0.5))))
    out = np.where(x == 0, 0.0, np.where(x == 1, 1.0, out))
    return float(out) if out.ndim == 0 else out


def f_v_inverse(f, v):
    f = _check_unit("f", f)
    v = _check_unit("v", v, open_interval=True)
    fc = np.clip(f, EPS, 1 - EPS)
    out = 0.5 + np.arctan(np.tan(np.pi * (fc - 0.5)) + np.tan(np.pi * (v - 0.5))) / np.pi
    out = np.where(f == 0, 0.0, np.where(f == 1, 1.0, out))
    return float(out) if out.ndim == 0 else out


def pixel_angles(y, v) -> np.ndarray:
    """Ry rotation angles pi * f_v(y); Ry(angle)|0> is the encoded qubit."""
    return np.pi * np.asarray(f_v(y, v))


def encode_pixel(y_i: float, v: float) -> StateVector:
    half = np.pi * f_v(y_i, v) / 2
    return StateVector(np.array([np.cos(half), np.sin(half)], dtype=complex))


def encode_signal(y, pixel_map: PixelMap) -> StateVector:
    """Product state built by one Y rotation per pixel on |0...0>."""
    y = as_signal(y)
    if y.size != len(pixel_map):
        raise ValueError(f"signal has {y.size} pixels, map has {len(pixel_map)}")
    state = StateVector.zero(y.size)
    for q, theta in enumerate(pixel_angles(y, pixel_map.midpoints)):
        state = apply_gate(state, GateOp(ry(theta), (q,), label=f"ry{q}"))
    return state


def encode_batch(samples, pixel_map: PixelMap) -> np.ndarray:
    """Real amplitude vectors for many signals at once, shape (N, 2**n)."""
    samples = _check_unit("samples", samples)
    if samples.ndim != 2 or samples.shape[1] != len(pixel_map):
        raise ValueError("samples must have shape (N, n_pixels)")
    half = pixel_angles(samples, pixel_map.midpoints) / 2
    return product_amplitudes(np.cos(half), np.sin(half))


def product_amplitudes(c: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Row-wise Kronecker product of per-qubit (c, s) factors, qubit 0 most significant."""
    out = np.ones((c.shape[0], 1))
    for q in range(c.shape[1]):
        out = np.stack([out * c[:, q:q + 1], out * s[:, q:q + 1]], axis=2).reshape(c.shape[0], -1)
    return out


def decode_frequency(p1, v):
    """Pixel estimate whose encoding has |1>-probability ``p1``."""
    p1 = _check_unit("p1", p1)
    f = (2 / np.pi) * np.arcsin(np.sqrt(p1))
    return f_v_inverse(np.clip(f, 0.0, 1.0), v)
