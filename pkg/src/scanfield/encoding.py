"""Periodic positional features lifting raw coordinates ahead of the network.

A point x in R^m is mapped to

    [x, sin(w_1 x), cos(w_1 x), ..., sin(w_h x), cos(w_h x)]

where each sin/cos acts componentwise, giving (2h + 1) * m features.  Every
feature depends on exactly one input coordinate, which keeps the chain rule
through the encoding sparse: the Jacobian has one nonzero per row, and the
feature Hessians are diagonal.  ``encode_jet`` exposes that structure so the
network's derivative propagation never materializes dense encoder Jacobians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

_F = npt.NDArray[np.floating]

DEFAULT_BANDS = 30


@dataclass(frozen=True)
class EncodingConfig:
    """Frequency ladder (rad per unit), strictly increasing and positive."""

    frequencies: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.frequencies, dtype=np.float64).reshape(-1)
        if w.size and (not np.all(np.isfinite(w)) or np.any(w <= 0.0)):
            raise ValueError("frequencies must be finite and positive")
        if w.size > 1 and np.any(np.diff(w) <= 0.0):
            raise ValueError("frequencies must be strictly increasing")
        object.__setattr__(self, "frequencies", w)

    @property
    def bands(self) -> int:
        return int(self.frequencies.size)

    def feature_count(self, dim: int) -> int:
        return (2 * self.bands + 1) * dim


def default_encoding(bands: int = DEFAULT_BANDS, base: float = math.pi) -> EncodingConfig:
    """Linear ladder w_k = k * base for k = 1..bands."""
    return EncodingConfig(base * np.arange(1, bands + 1, dtype=np.float64))


def encode(x: _F, cfg: EncodingConfig) -> np.ndarray:
    """Encode a single point (m,) to a feature vector ((2h+1)*m,)."""
    return encode_batch(np.asarray(x, dtype=np.float64)[None, :], cfg)[0]


def encode_batch(points: _F, cfg: EncodingConfig) -> np.ndarray:
    """Encode (N, m) points to (N, (2h+1)*m) features.

    Layout is blockwise: the m raw coordinates first, then for each frequency
    the m sine features followed by the m cosine features.
    """
    x = np.asarray(points, dtype=np.float64)
    n, m = x.shape
    h = cfg.bands
    out = np.empty((n, (2 * h + 1) * m), dtype=np.float64)
    out[:, :m] = x
    for k in range(h):
        arg = cfg.frequencies[k] * x
        lo = (1 + 2 * k) * m
        out[:, lo : lo + m] = np.sin(arg)
        out[:, lo + m : lo + 2 * m] = np.cos(arg)
    return out


@dataclass(frozen=True)
class EncodedJet:
    """Features with their sparse first and second derivatives.

    ``values``/``d1``/``d2`` all have shape (N, F).  Feature f depends only on
    input coordinate ``coord[f]``; d1 and d2 hold that single partial and its
    second derivative.
    """

    values: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    coord: np.ndarray


def encode_jet(points: _F, cfg: EncodingConfig) -> EncodedJet:
    """Features plus exact per-feature derivatives for (N, m) points."""
    x = np.asarray(points, dtype=np.float64)
    n, m = x.shape
    h = cfg.bands
    f = (2 * h + 1) * m
    values = np.empty((n, f), dtype=np.float64)
    d1 = np.empty((n, f), dtype=np.float64)
    d2 = np.empty((n, f), dtype=np.float64)
    values[:, :m] = x
    d1[:, :m] = 1.0
    d2[:, :m] = 0.0
    for k in range(h):
        w = cfg.frequencies[k]
        arg = w * x
        s = np.sin(arg)
        c = np.cos(arg)
        lo = (1 + 2 * k) * m
        values[:, lo : lo + m] = s
        values[:, lo + m : lo + 2 * m] = c
        d1[:, lo : lo + m] = w * c
        d1[:, lo + m : lo + 2 * m] = -w * s
        d2[:, lo : lo + m] = -(w * w) * s
        d2[:, lo + m : lo + 2 * m] = -(w * w) * c
    coord = np.tile(np.arange(m, dtype=np.intp), 2 * h + 1)
    return EncodedJet(values=values, d1=d1, d2=d2, coord=coord)


def encode_jacobian(x: _F, cfg: EncodingConfig) -> np.ndarray:
    """Dense (F, m) Jacobian of the encoding at one point, for checking."""
    jet = encode_jet(np.asarray(x, dtype=np.float64)[None, :], cfg)
    f = jet.values.shape[1]
    m = np.asarray(x).shape[0]
    jac = np.zeros((f, m), dtype=np.float64)
    jac[np.arange(f), jet.coord] = jet.d1[0]
    return jac
