"""RBF affinity field: local kernels, their superposition, and bandwidth rules.

A kernel-based ODD is a set of anchors, each carrying a diagonal RBF kernel
``a_i(x) = exp(-1/2 * sum_k (x_k - c_ik)**2 / s_ik)``. The global affinity is
the probabilistic-OR superposition ``1 - prod_i (1 - a_i(x))``, which stays in
[0, 1] and equals 1 exactly on every anchor.

Floating-point products are not associative, so every evaluation accumulates
over anchors in canonical (lexicographically sorted) order. That is what makes
a derived model independent of the order of the input rows at the bit level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _numeric
from .errors import ConfigError, DimensionMismatchError

__all__ = [
    "KernelConfig",
    "Normalizer",
    "AnchorKernel",
    "Dataset",
    "canonicalize",
    "nn_distances",
    "estimate_sigma",
    "local_affinity",
    "superpose",
    "global_affinity",
    "affinity_gradient",
    "kernel_arrays",
]

DISTANCE_MODES = ("global", "per_dimension")


@dataclass(frozen=True)
class KernelConfig:
    """Bandwidth hyperparameters.

    ``kappa`` is the widest allowed variance, ``lam`` the narrowest, and
    ``eta`` how fast the variance decays with nearest-neighbour distance.
    """

    kappa: float = 1.0
    eta: float = 1.0
    lam: float = 0.05
    distance_mode: str = "global"
    normalize: bool = False

    def __post_init__(self):
        for name in ("kappa", "eta", "lam"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"{name} must be a finite real, got {v!r}")
            object.__setattr__(self, name, float(v))
        if not self.kappa > 0:
            raise ConfigError(f"kappa must be > 0, got {self.kappa}")
        if not self.eta >= 0:
            raise ConfigError(f"eta must be >= 0, got {self.eta}")
        if not 0 < self.lam <= self.kappa:
            raise ConfigError(f"lambda must satisfy 0 < lambda <= kappa, got {self.lam}")
        if self.distance_mode not in DISTANCE_MODES:
            raise ConfigError(f"distance_mode must be one of {DISTANCE_MODES}")
        object.__setattr__(self, "normalize", bool(self.normalize))


@dataclass(frozen=True, eq=False)
class Normalizer:
    """Per-dimension min-max scaling fitted on ID samples."""

    offsets: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        off = np.array(self.offsets, dtype=np.float64).reshape(-1)
        sc = np.array(self.scales, dtype=np.float64).reshape(-1)
        if off.shape != sc.shape:
            raise ConfigError("offsets and scales must have equal length")
        if not (np.all(np.isfinite(off)) and np.all(np.isfinite(sc))):
            raise ConfigError("normalizer entries must be finite")
        if np.any(sc <= 0):
            raise ConfigError("normalizer scales must be strictly positive")
        off.setflags(write=False)
        sc.setflags(write=False)
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "scales", sc)

    @classmethod
    def fit(cls, points) -> "Normalizer":
        pts = np.asarray(points, dtype=np.float64)
        lo = pts.min(axis=0)
        rng = pts.max(axis=0) - lo
        return cls(lo, np.where(rng > 0, rng, 1.0))

    @property
    def dimension(self) -> int:
        return self.offsets.shape[0]

    def apply(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.offsets) / self.scales

    def invert(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * self.scales + self.offsets

    def __eq__(self, other):
        if not isinstance(other, Normalizer):
            return NotImplemented
        return np.array_equal(self.offsets, other.offsets) and np.array_equal(
            self.scales, other.scales
        )


@dataclass(frozen=True)
class AnchorKernel:
    """One anchor: its centre in original units and its diagonal variances.

    When the owning model normalises inputs, ``sigma_diag`` is expressed in
    normalised units.
    """

    center: tuple
    sigma_diag: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in self.center)
        s = tuple(float(v) for v in self.sigma_diag)
        if len(c) != len(s) or not c:
            raise ConfigError("center and sigma_diag must be non-empty and of equal length")
        if not all(math.isfinite(v) for v in c):
            raise ConfigError("anchor center must be finite")
        if not all(math.isfinite(v) and v > 0 for v in s):
            raise ConfigError(f"sigma_diag entries must be finite and > 0, got {s}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "sigma_diag", s)

    @property
    def dimension(self) -> int:
        return len(self.center)


def _points(a, n: Optional[int] = None) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if arr.size == 0:
        arr = arr.reshape(0, n or 0)
    if arr.ndim != 2:
        raise ConfigError("samples must be a 2-D (rows, dimensions) array")
    if n is not None and arr.shape[1] != n:
        raise DimensionMismatchError(n, arr.shape[1], what="sample")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(arr), axis=1))[0])
        raise ConfigError(f"sample row {bad} contains NaN or Inf")
    # -0.0 and 0.0 compare equal but serialise differently; fold them together.
    arr = arr + 0.0
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labelled samples: ID rows become anchors, OOD rows constrain them."""

    dimension: int
    id_samples: np.ndarray
    ood_samples: np.ndarray = None
    dimension_names: Optional[tuple] = None

    def __post_init__(self):
        n = int(self.dimension)
        if n < 1:
            raise ConfigError("dimension must be >= 1")
        object.__setattr__(self, "dimension", n)
        object.__setattr__(self, "id_samples", _points(self.id_samples, n))
        ood = self.ood_samples if self.ood_samples is not None else np.empty((0, n))
        object.__setattr__(self, "ood_samples", _points(ood, n))
        if self.dimension_names is not None:
            names = tuple(str(s) for s in self.dimension_names)
            if len(names) != n:
                raise ConfigError(f"expected {n} dimension names, got {len(names)}")
            object.__setattr__(self, "dimension_names", names)


def _lexsorted(pts: np.ndarray) -> np.ndarray:
    if pts.shape[0] <= 1:
        return pts
    order = np.lexsort(pts.T[::-1])
    out = pts[order]
    out.setflags(write=False)
    return out


def canonicalize(ds: Dataset) -> Dataset:
    """Sort ID and OOD rows lexicographically. Duplicates are kept."""
    return Dataset(
        ds.dimension,
        _lexsorted(ds.id_samples),
        _lexsorted(ds.ood_samples),
        ds.dimension_names,
    )


def nn_distances(points, mode: str = "global") -> np.ndarray:
    """Distance from each point to its nearest other point.

    In ``"global"`` mode returns shape (m,) Euclidean distances. In
    ``"per_dimension"`` mode returns shape (m, n): the coordinate-wise absolute
    offsets to that same globally nearest neighbour. A lone point gets zeros.
    """
    if mode not in DISTANCE_MODES:
        raise ConfigError(f"distance_mode must be one of {DISTANCE_MODES}")
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    dist, idx = _numeric.nearest_neighbours(pts)
    if mode == "global":
        return dist
    out = np.zeros_like(pts)
    has = idx >= 0
    out[has] = np.abs(pts[has] - pts[idx[has]])
    return out


def estimate_sigma(d_star, cfg: KernelConfig):
    """Variance from nearest-neighbour distance: ``(kappa - lam) e^(-eta d) + lam``.

    Accepts a scalar or an array. Results are clipped into ``[lam, kappa]`` to
    absorb the last-bit rounding of the affine combination.
    """
    if not isinstance(cfg, KernelConfig):
        raise ConfigError("cfg must be a KernelConfig")
    d = np.asarray(d_star, dtype=np.float64)
    if np.any(~np.isfinite(d)) or np.any(d < 0):
        raise ConfigError("d_star must be finite and >= 0")
    sigma = (cfg.kappa - cfg.lam) * np.exp(-cfg.eta * d) + cfg.lam
    sigma = np.clip(sigma, cfg.lam, cfg.kappa)
    return float(sigma) if sigma.ndim == 0 else sigma


def local_affinity(k: AnchorKernel, x) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != k.dimension:
        raise DimensionMismatchError(k.dimension, x.shape[0])
    q = 0.0
    for xk, ck, sk in zip(x.tolist(), k.center, k.sigma_diag):
        d = xk - ck
        q += d * d / sk
    return math.exp(-0.5 * q)


def superpose(locals_: Iterable[float]) -> float:
    """``1 - prod(1 - a_i)`` accumulated left to right.

    Never returns less than the largest input, which the exact value
    guarantees but rounding of ``1 - (1 - a)`` alone does not.
    """
    prod = 1.0
    best = 0.0
    for a in locals_:
        a = float(a)
        if not 0.0 <= a <= 1.0:
            raise ConfigError(f"local affinity {a} outside [0, 1]")
        prod *= 1.0 - a
        best = max(best, a)
    return max(1.0 - prod, best)


def canonical_kernels(kernels: Sequence[AnchorKernel]) -> list[AnchorKernel]:
    return sorted(kernels, key=lambda k: (k.center, k.sigma_diag))


def kernel_arrays(kernels: Sequence[AnchorKernel], norm: Optional[Normalizer] = None):
    """(centres, variances) as contiguous arrays, centres in evaluation space."""
    C = np.array([k.center for k in kernels], dtype=np.float64)
    S = np.array([k.sigma_diag for k in kernels], dtype=np.float64)
    if norm is not None and len(kernels):
        C = norm.apply(C)
    return np.ascontiguousarray(C), np.ascontiguousarray(S)


def _check_dims(kernels, norm, dim):
    if kernels:
        n = kernels[0].dimension
        for i, k in enumerate(kernels):
            if k.dimension != n:
                raise DimensionMismatchError(n, k.dimension, what=f"kernel {i}")
        if dim != n:
            raise DimensionMismatchError(n, dim)
    if norm is not None and norm.dimension != dim:
        raise DimensionMismatchError(norm.dimension, dim)


def global_affinity(kernels: Sequence[AnchorKernel], norm: Optional[Normalizer], x) -> float:
    """Superposed affinity at ``x``, evaluated in canonical anchor order."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    kernels = canonical_kernels(kernels)
    _check_dims(kernels, norm, x.shape[0])
    if not kernels:
        return 0.0
    C, S = kernel_arrays(kernels, norm)
    xe = norm.apply(x) if norm is not None else x
    return float(_numeric.affinity_batch(xe[None, :], C, S)[0])


def affinity_gradient(kernels: Sequence[AnchorKernel], norm: Optional[Normalizer], x) -> np.ndarray:
    """Analytic gradient of the global affinity with respect to ``x`` (original units)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    kernels = canonical_kernels(kernels)
    _check_dims(kernels, norm, x.shape[0])
    if not kernels:
        return np.zeros_like(x)
    C, S = kernel_arrays(kernels, norm)
    xe = norm.apply(x) if norm is not None else x
    a = _numeric.local_batch(xe, C, S)
    one_minus = 1.0 - a
    # prod_{j != i}(1 - a_j) without dividing, so a_j == 1 is handled.
    prefix = np.concatenate([[1.0], np.cumprod(one_minus)[:-1]])
    suffix = np.concatenate([np.cumprod(one_minus[::-1])[:-1][::-1], [1.0]])
    weight = prefix * suffix * a
    grad = (weight[:, None] * (C - xe) / S).sum(axis=0)
    if norm is not None:
        grad = grad / norm.scales
    return grad
