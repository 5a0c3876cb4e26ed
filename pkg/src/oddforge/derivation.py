"""Derive a kernel ODD from labelled samples.

Every ID sample becomes an anchor. Each anchor's variance comes from its
distance to the nearest other anchor. OOD samples are then visited in sorted
order and, while one still scores above ``xi``, the anchor contributing most
at that point has its variances halved.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _numeric
from .errors import ConfigError, NonConvergenceError, UnsatisfiableConstraintError
from .kernel import (
    AnchorKernel,
    Dataset,
    KernelConfig,
    Normalizer,
    canonicalize,
    estimate_sigma,
    nn_distances,
)

log = logging.getLogger(__name__)

__all__ = [
    "DerivationConfig",
    "Adjustment",
    "DerivationReport",
    "derive",
    "enforce_ood",
    "dataset_digest",
]


@dataclass(frozen=True)
class DerivationConfig:
    """Settings for one derivation run.

    ``xi`` has no default on purpose; pick it per assurance level
    (for instance 0.1, 0.01 or 0.001 for increasingly critical failure
    conditions).
    """

    kernel_cfg: KernelConfig
    zeta: float
    xi: float
    shrink_factor: float = 0.5
    max_shrink_iters: int = 200
    max_passes: int = 50
    shrink_floor: float = 1e-9

    def __post_init__(self):
        if not isinstance(self.kernel_cfg, KernelConfig):
            raise ConfigError("kernel_cfg must be a KernelConfig")
        z, xi = float(self.zeta), float(self.xi)
        if not (math.isfinite(z) and 0.0 <= z <= 1.0):
            raise ConfigError(f"zeta must lie in [0, 1], got {self.zeta}")
        if not (math.isfinite(xi) and 0.0 <= xi < 1.0):
            raise ConfigError(f"xi must lie in [0, 1), got {self.xi}")
        if not xi < z:
            raise ConfigError(f"xi ({xi}) must be strictly below zeta ({z})")
        if not 0.0 < self.shrink_factor < 1.0:
            raise ConfigError("shrink_factor must lie in (0, 1)")
        if self.max_shrink_iters < 1 or self.max_passes < 1:
            raise ConfigError("iteration caps must be >= 1")
        if not self.shrink_floor > 0:
            raise ConfigError("shrink_floor must be > 0")
        object.__setattr__(self, "zeta", z)
        object.__setattr__(self, "xi", xi)


@dataclass(frozen=True)
class Adjustment:
    anchor_index: int
    old_sigma: tuple
    new_sigma: tuple
    ood_index: int


@dataclass
class DerivationReport:
    n_anchors: int
    n_ood: int
    adjustments: list = field(default_factory=list)
    passes_used: int = 0
    constraint_satisfied: bool = False

    def summary(self) -> str:
        return (
            f"anchors={self.n_anchors} ood={self.n_ood} "
            f"adjustments={len(self.adjustments)} passes={self.passes_used} "
            f"constraint_satisfied={str(self.constraint_satisfied).lower()}"
        )


def _eval_space(points: np.ndarray, norm: Optional[Normalizer]) -> np.ndarray:
    return norm.apply(points) if norm is not None else points


def enforce_ood(kernels, ood, cfg: DerivationConfig, norm: Optional[Normalizer] = None):
    """Shrink kernels until every OOD point scores at most ``cfg.xi``.

    Parameters
    ----------
    kernels : sequence of AnchorKernel, canonical order
    ood : array_like, shape (k, n), canonical order
    cfg : DerivationConfig
    norm : Normalizer, optional

    Returns
    -------
    (list of AnchorKernel, list of Adjustment, passes_used)

    Raises
    ------
    UnsatisfiableConstraintError
        An OOD point sits exactly on an anchor.
    NonConvergenceError
        One kernel needed more than ``max_shrink_iters`` steps for one OOD
        point, or ``max_passes`` was exhausted.
    """
    kernels = list(kernels)
    ood = np.asarray(ood, dtype=np.float64).reshape(-1, kernels[0].dimension if kernels else 0)
    adjustments: list[Adjustment] = []
    if ood.shape[0] == 0 or not kernels:
        return kernels, adjustments, 0

    C = np.array([k.center for k in kernels], dtype=np.float64)
    Ce = np.ascontiguousarray(_eval_space(C, norm))
    S = np.array([k.sigma_diag for k in kernels], dtype=np.float64)
    Oe = _eval_space(ood, norm)

    for j in range(Oe.shape[0]):
        hit = np.flatnonzero(np.all(Ce == Oe[j], axis=1))
        if hit.size:
            raise UnsatisfiableConstraintError(
                f"OOD sample {j} coincides with anchor {int(hit[0])}; "
                "its affinity is 1 for any kernel width"
            )

    passes = 0
    for passes in range(1, cfg.max_passes + 1):
        changed = False
        for j in range(Oe.shape[0]):
            o = Oe[j]
            # The cap bounds how often one kernel may shrink for one point;
            # many overlapping kernels may each need a few steps.
            iters = np.zeros(len(kernels), dtype=np.int64)
            while _numeric.affinity_batch(o[None, :], Ce, S)[0] > cfg.xi:
                local = _numeric.local_batch(o, Ce, S)
                i = int(np.argmax(local))  # first maximum = lowest canonical index
                if iters[i] >= cfg.max_shrink_iters:
                    raise NonConvergenceError(
                        f"OOD sample {j} still above xi={cfg.xi} after "
                        f"{cfg.max_shrink_iters} shrink steps of anchor {i}",
                        adjustments,
                    )
                old = S[i].copy()
                new = np.maximum(old * cfg.shrink_factor, cfg.shrink_floor)
                if np.array_equal(new, old):
                    raise NonConvergenceError(
                        f"anchor {i} already at the shrink floor but OOD sample {j} "
                        f"still scores above xi={cfg.xi}",
                        adjustments,
                    )
                S[i] = new
                adjustments.append(Adjustment(i, tuple(old.tolist()), tuple(new.tolist()), j))
                changed = True
                iters[i] += 1
        if not changed:
            break
    else:
        raise NonConvergenceError(
            f"OOD enforcement still adjusting after {cfg.max_passes} passes", adjustments
        )

    out = [AnchorKernel(k.center, tuple(S[i].tolist())) for i, k in enumerate(kernels)]
    return out, adjustments, passes


def dataset_digest(ds: Dataset, kernel_cfg: KernelConfig, zeta: float, xi: float) -> str:
    """SHA-256 over the canonical sample multiset and the settings a model records.

    Only settings stored in the model file are hashed, so the digest can be
    re-checked from a model plus its source data.
    """
    c = canonicalize(ds)
    payload = {
        "dimension": c.dimension,
        "id": c.id_samples.tolist(),
        "ood": c.ood_samples.tolist(),
        "config": {
            "kappa": kernel_cfg.kappa,
            "eta": kernel_cfg.eta,
            "lambda": kernel_cfg.lam,
            "distance_mode": kernel_cfg.distance_mode,
            "normalize": kernel_cfg.normalize,
            "zeta": float(zeta),
            "xi": float(xi),
        },
    }
    blob = json.dumps(payload, separators=(",", ":"), allow_nan=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def derive(ds: Dataset, cfg: DerivationConfig):
    """Build a :class:`~oddforge.model.KernelOdd` from ``ds``.

    Returns ``(model, report)``. The result depends only on the multiset of
    samples and on ``cfg``.
    """
    from .model import KernelOdd

    if ds.id_samples.shape[0] == 0:
        raise ConfigError("cannot derive an ODD without ID samples")
    c = canonicalize(ds)
    kc = cfg.kernel_cfg
    norm = Normalizer.fit(c.id_samples) if kc.normalize else None
    pts = _eval_space(c.id_samples, norm)

    d_star = nn_distances(pts, kc.distance_mode)
    sigma = estimate_sigma(d_star, kc)
    if kc.distance_mode == "global":
        sigma = np.repeat(np.asarray(sigma).reshape(-1, 1), c.dimension, axis=1)
    kernels = [AnchorKernel(tuple(x), tuple(s)) for x, s in zip(c.id_samples.tolist(), sigma.tolist())]

    report = DerivationReport(n_anchors=len(kernels), n_ood=c.ood_samples.shape[0])
    try:
        kernels, adjustments, passes = enforce_ood(kernels, c.ood_samples, cfg, norm)
    except NonConvergenceError as exc:
        report.adjustments = list(exc.report or [])
        exc.report = report
        raise
    report.adjustments = adjustments
    report.passes_used = passes

    model = KernelOdd(
        kernels=tuple(kernels),
        zeta=cfg.zeta,
        xi=cfg.xi,
        normalizer=norm,
        config=kc,
        dimension_names=c.dimension_names,
        dataset_digest=dataset_digest(ds, kc, cfg.zeta, cfg.xi),
    )
    if c.ood_samples.shape[0]:
        worst = float(np.max(model.affinities(c.ood_samples)))
        report.constraint_satisfied = worst <= cfg.xi
    else:
        report.constraint_satisfied = True
    log.info("derived ODD: %s", report.summary())
    return model, report
