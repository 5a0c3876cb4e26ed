"""The persisted, queryable kernel ODD."""

from __future__ import annotations

import bisect
import json
import math
import re
from dataclasses import dataclass, field
from os import PathLike
from typing import Optional, Sequence

import numpy as np

from . import _numeric
from .errors import (
    ConfigError,
    DimensionMismatchError,
    IncompatibleVersionError,
    ModelFormatError,
)
from .kernel import AnchorKernel, KernelConfig, Normalizer, kernel_arrays

__all__ = ["KernelOdd", "FORMAT_VERSION", "is_inside", "affinity_band", "score_batch", "save", "load"]

FORMAT_VERSION = "1"
KERNEL_TYPE = "rbf"
_DIGEST_RE = re.compile(r"^[0-9a-f]{64}$")


@dataclass(frozen=True, eq=False)
class KernelOdd:
    """Anchors with their kernels, the membership threshold ``zeta`` and the
    OOD ceiling ``xi`` that was enforced when the model was derived."""

    kernels: tuple
    zeta: float
    xi: float
    config: KernelConfig
    normalizer: Optional[Normalizer] = None
    dimension_names: Optional[tuple] = None
    dataset_digest: str = ""
    format_version: str = FORMAT_VERSION
    _C: np.ndarray = field(init=False, repr=False)
    _S: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        kernels = tuple(self.kernels)
        if not kernels:
            raise ConfigError("a model needs at least one anchor kernel")
        n = kernels[0].dimension
        for i, k in enumerate(kernels):
            if k.dimension != n:
                raise DimensionMismatchError(n, k.dimension, what=f"kernel {i}")
        for i in range(1, len(kernels)):
            if kernels[i].center < kernels[i - 1].center:
                raise ConfigError(f"kernels are not in canonical order at index {i}")
        z, xi = float(self.zeta), float(self.xi)
        if not (0.0 <= z <= 1.0 and 0.0 <= xi < 1.0 and xi < z):
            raise ConfigError(f"need 0 <= xi < zeta <= 1, got xi={xi}, zeta={z}")
        if self.normalizer is not None and self.normalizer.dimension != n:
            raise DimensionMismatchError(n, self.normalizer.dimension, what="normalizer")
        if self.dimension_names is not None:
            names = tuple(self.dimension_names)
            if len(names) != n:
                raise ConfigError(f"expected {n} dimension names, got {len(names)}")
            object.__setattr__(self, "dimension_names", names)
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "zeta", z)
        object.__setattr__(self, "xi", xi)
        C, S = kernel_arrays(kernels, self.normalizer)
        C.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "_C", C)
        object.__setattr__(self, "_S", S)

    @property
    def dimension(self) -> int:
        return self.kernels[0].dimension

    def __len__(self) -> int:
        return len(self.kernels)

    def __eq__(self, other):
        if not isinstance(other, KernelOdd):
            return NotImplemented
        return self.to_json() == other.to_json()

    def _rows(self, xs) -> np.ndarray:
        if isinstance(xs, np.ndarray):
            pts = xs.astype(np.float64, copy=False)
            if pts.ndim == 1 and pts.size == 0:
                pts = pts.reshape(0, self.dimension)
            if pts.ndim != 2 or pts.shape[1] != self.dimension:
                raise DimensionMismatchError(self.dimension, pts.shape[-1], row=0)
            return pts
        rows = list(xs)
        for i, r in enumerate(rows):
            if len(r) != self.dimension:
                raise DimensionMismatchError(self.dimension, len(r), row=i)
        return np.array(rows, dtype=np.float64).reshape(len(rows), self.dimension)

    def affinities(self, xs) -> np.ndarray:
        """Global affinity for each row of ``xs``."""
        pts = self._rows(xs)
        if self.normalizer is not None:
            pts = self.normalizer.apply(pts)
        return _numeric.affinity_batch(pts, self._C, self._S)

    def affinity(self, x) -> float:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.dimension:
            raise DimensionMismatchError(self.dimension, x.shape[0])
        return float(self.affinities(x[None, :])[0])

    def is_inside(self, x) -> tuple[bool, float]:
        a = self.affinity(x)
        return a >= self.zeta, a

    def score_batch(self, xs) -> list[tuple[float, bool]]:
        a = self.affinities(xs)
        return [(float(v), bool(v >= self.zeta)) for v in a]

    def affinity_band(self, x, bands: Sequence[float]) -> int:
        return band_index(self.affinity(x), bands)

    # -- serialisation -------------------------------------------------

    def to_dict(self) -> dict:
        kc = self.config
        d = {"format_version": self.format_version, "kernel_type": KERNEL_TYPE, "dimension": self.dimension}
        if self.dimension_names is not None:
            d["dimension_names"] = list(self.dimension_names)
        d["zeta"] = self.zeta
        d["xi"] = self.xi
        if self.normalizer is not None:
            d["normalizer"] = {
                "offsets": self.normalizer.offsets.tolist(),
                "scales": self.normalizer.scales.tolist(),
            }
        d["config"] = {
            "kappa": kc.kappa,
            "eta": kc.eta,
            "lambda": kc.lam,
            "distance_mode": kc.distance_mode,
        }
        d["anchors"] = [{"center": list(k.center), "sigma_diag": list(k.sigma_diag)} for k in self.kernels]
        d["dataset_digest"] = self.dataset_digest
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, ensure_ascii=False, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "KernelOdd":
        if not isinstance(d, dict):
            raise ModelFormatError("model file must hold a JSON object")
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise IncompatibleVersionError(
                f"model format_version {version!r} is not supported (expected {FORMAT_VERSION!r})"
            )
        if d.get("kernel_type") != KERNEL_TYPE:
            raise ModelFormatError(f"unsupported kernel_type {d.get('kernel_type')!r}")
        try:
            cfg = d["config"]
            norm = None
            if d.get("normalizer") is not None:
                norm = Normalizer(_reals(d["normalizer"]["offsets"]), _reals(d["normalizer"]["scales"]))
            kc = KernelConfig(
                kappa=_real(cfg["kappa"]),
                eta=_real(cfg["eta"]),
                lam=_real(cfg["lambda"]),
                distance_mode=cfg["distance_mode"],
                normalize=norm is not None,
            )
            kernels = tuple(
                AnchorKernel(_reals(a["center"]), _reals(a["sigma_diag"])) for a in d["anchors"]
            )
            model = cls(
                kernels=kernels,
                zeta=_real(d["zeta"]),
                xi=_real(d["xi"]),
                config=kc,
                normalizer=norm,
                dimension_names=tuple(d["dimension_names"]) if d.get("dimension_names") is not None else None,
                dataset_digest=str(d.get("dataset_digest", "")),
            )
        except (KeyError, TypeError) as exc:
            raise ModelFormatError(f"model file is missing or mistypes a field: {exc!r}") from exc
        except ConfigError as exc:
            raise ModelFormatError(f"model file failed validation: {exc}") from exc
        if int(d.get("dimension", model.dimension)) != model.dimension:
            raise ModelFormatError(
                f"declared dimension {d.get('dimension')} does not match anchors ({model.dimension})"
            )
        return model

    @classmethod
    def from_json(cls, text: str) -> "KernelOdd":
        def reject(name):
            raise ModelFormatError(f"non-finite constant {name} is not allowed in a model file")

        try:
            d = json.loads(text, parse_constant=reject)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(
                f"malformed model JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from exc
        return cls.from_dict(d)

    def save(self, path: str | PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path: str | PathLike) -> "KernelOdd":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def digest_looks_valid(self) -> bool:
        return bool(_DIGEST_RE.match(self.dataset_digest))


def _real(v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ModelFormatError(f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ModelFormatError("non-finite number in model file")
    return v


def _reals(vs) -> tuple:
    if not isinstance(vs, list):
        raise ModelFormatError(f"expected a list of numbers, got {vs!r}")
    return tuple(_real(v) for v in vs)


def band_index(affinity: float, bands: Sequence[float]) -> int:
    """Number of band boundaries at or below ``affinity``."""
    bands = [float(b) for b in bands]
    for i, b in enumerate(bands):
        if not 0.0 <= b <= 1.0:
            raise ConfigError(f"band boundary {b} outside [0, 1]")
        if i and not bands[i - 1] < b:
            raise ConfigError("band boundaries must be strictly increasing")
    return bisect.bisect_right(bands, affinity)


def is_inside(m: KernelOdd, x) -> tuple[bool, float]:
    return m.is_inside(x)


def affinity_band(m: KernelOdd, x, bands: Sequence[float]) -> int:
    return m.affinity_band(x, bands)


def score_batch(m: KernelOdd, xs) -> list[tuple[float, bool]]:
    return m.score_batch(xs)


def save(m: KernelOdd, path) -> None:
    m.save(path)


def load(path) -> KernelOdd:
    return KernelOdd.load(path)
