"""Ground-truth ODD structures and convex hulls.

Everything here is an exact membership oracle used to score the kernel
representation: hyperrectangles and general H-polytopes for the taxonomy,
polynomial inequalities for the relationships between parameters, and the
convex hull of the anchors as the stand-in when no ground truth exists.

All memberships are closed sets. Points on a boundary count as inside.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from os import PathLike
from typing import Sequence

import numpy as np
from scipy.spatial import ConvexHull as _QhullHull
from scipy.spatial import QhullError

from .errors import ConfigError, DegenerateHullError, DimensionMismatchError

__all__ = [
    "ConvexPolytope",
    "OddPolytope",
    "PolynomialInequality",
    "GroundTruthOdd",
    "ConvexHull",
    "polytope_contains",
    "odd_polytope_contains",
    "relationship_holds",
    "ground_truth_contains",
    "build_convex_hull",
    "hull_contains",
    "ground_truth_from_dict",
    "load_ground_truth",
]


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def _as_point(x, dim: int) -> np.ndarray:
    p = np.asarray(x, dtype=np.float64).reshape(-1)
    if p.shape[0] != dim:
        raise DimensionMismatchError(dim, p.shape[0])
    return p


def _as_points(xs, dim: int) -> np.ndarray:
    pts = np.asarray(xs, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, dim) if pts.size == 0 else pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise DimensionMismatchError(dim, pts.shape[-1] if pts.ndim else 0)
    return pts


@dataclass(frozen=True)
class ConvexPolytope:
    """H-representation ``{x : A x <= b}``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=np.float64)
        b = np.array(self.b, dtype=np.float64).reshape(-1)
        if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
            raise ConfigError("A must be a non-empty 2-D matrix")
        if b.shape[0] != A.shape[0]:
            raise ConfigError(f"len(b)={b.shape[0]} does not match rows(A)={A.shape[0]}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ConfigError("A and b must be finite")
        if np.any(np.all(A == 0.0, axis=1)):
            raise ConfigError("A contains an all-zero row")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "b", _frozen(b))

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> "ConvexPolytope":
        lo = np.asarray(lower, dtype=np.float64).reshape(-1)
        hi = np.asarray(upper, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape or lo.size == 0:
            raise ConfigError("box bounds must be non-empty and of equal length")
        if np.any(lo > hi):
            raise ConfigError("box lower bound exceeds upper bound")
        n = lo.shape[0]
        eye = np.eye(n)
        return cls(np.vstack([eye, -eye]), np.concatenate([hi, -lo]))

    @property
    def dimension(self) -> int:
        return self.A.shape[1]

    def contains(self, x) -> bool:
        p = _as_point(x, self.dimension)
        return bool(np.all(self.A @ p <= self.b))

    def contains_many(self, xs) -> np.ndarray:
        pts = _as_points(xs, self.dimension)
        return np.all(pts @ self.A.T <= self.b, axis=1)


@dataclass(frozen=True)
class OddPolytope:
    """Union of convex parts. Disjointness of the parts is the caller's contract."""

    parts: tuple

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise ConfigError("OddPolytope needs at least one part")
        dims = {p.dimension for p in parts}
        if len(dims) != 1:
            raise ConfigError(f"parts have differing dimensions {sorted(dims)}")
        object.__setattr__(self, "parts", parts)

    @property
    def dimension(self) -> int:
        return self.parts[0].dimension

    def contains(self, x) -> bool:
        p = _as_point(x, self.dimension)
        return any(part.contains(p) for part in self.parts)

    def contains_many(self, xs) -> np.ndarray:
        pts = _as_points(xs, self.dimension)
        out = np.zeros(pts.shape[0], dtype=bool)
        for part in self.parts:
            out |= part.contains_many(pts)
        return out


@dataclass(frozen=True)
class PolynomialInequality:
    """``sum_j c_j * prod_k x_k**e_jk  (>= | <=)  0``.

    ``terms`` is a sequence of ``(coefficient, exponents)`` pairs. Terms are
    stored sorted by exponent vector so evaluation order is canonical.
    """

    terms: tuple
    sense: str = "ge"

    def __post_init__(self):
        if self.sense not in ("ge", "le"):
            raise ConfigError(f"sense must be 'ge' or 'le', got {self.sense!r}")
        norm = []
        dim = None
        for coeff, exps in self.terms:
            exps = tuple(int(e) for e in exps)
            if any(e < 0 for e in exps):
                raise ConfigError("exponents must be non-negative integers")
            if dim is None:
                dim = len(exps)
            elif len(exps) != dim:
                raise ConfigError("all exponent vectors must have the same length")
            coeff = float(coeff)
            if not np.isfinite(coeff):
                raise ConfigError("coefficients must be finite")
            norm.append((coeff, exps))
        if not norm:
            raise ConfigError("polynomial needs at least one term")
        norm.sort(key=lambda t: t[1])
        object.__setattr__(self, "terms", tuple(norm))

    @classmethod
    def linear(cls, coeffs: Sequence[float], const: float, sense: str = "ge"):
        """``coeffs . x + const (>=|<=) 0``."""
        n = len(coeffs)
        terms = [(c, tuple(int(i == k) for i in range(n))) for k, c in enumerate(coeffs) if c != 0]
        terms.append((const, (0,) * n))
        return cls(tuple(terms), sense)

    @property
    def dimension(self) -> int:
        return len(self.terms[0][1])

    def evaluate_many(self, xs) -> np.ndarray:
        pts = _as_points(xs, self.dimension)
        total = np.zeros(pts.shape[0])
        for coeff, exps in self.terms:
            mono = np.full(pts.shape[0], coeff)
            for k, e in enumerate(exps):
                if e:
                    mono = mono * pts[:, k] ** e
            total = total + mono
        return total

    def evaluate(self, x) -> float:
        return float(self.evaluate_many(_as_point(x, self.dimension)[None, :])[0])

    def holds_many(self, xs) -> np.ndarray:
        v = self.evaluate_many(xs)
        return v >= 0.0 if self.sense == "ge" else v <= 0.0

    def holds(self, x) -> int:
        return int(self.holds_many(_as_point(x, self.dimension)[None, :])[0])


@dataclass(frozen=True)
class GroundTruthOdd:
    """Structure ``(X, R)``: taxonomy region plus relationship constraints."""

    taxonomy: OddPolytope
    ontology: tuple = ()

    def __post_init__(self):
        tax = self.taxonomy
        if isinstance(tax, ConvexPolytope):
            tax = OddPolytope((tax,))
            object.__setattr__(self, "taxonomy", tax)
        ont = tuple(self.ontology)
        for rel in ont:
            if rel.dimension != tax.dimension:
                raise DimensionMismatchError(tax.dimension, rel.dimension, what="relationship")
        object.__setattr__(self, "ontology", ont)

    @property
    def dimension(self) -> int:
        return self.taxonomy.dimension

    def contains(self, x) -> bool:
        return bool(self.contains_many(_as_point(x, self.dimension)[None, :])[0])

    def contains_many(self, xs) -> np.ndarray:
        pts = _as_points(xs, self.dimension)
        out = self.taxonomy.contains_many(pts)
        for rel in self.ontology:
            out &= rel.holds_many(pts)
        return out

    def relationships_hold_many(self, xs) -> np.ndarray:
        pts = _as_points(xs, self.dimension)
        out = np.ones(pts.shape[0], dtype=bool)
        for rel in self.ontology:
            out &= rel.holds_many(pts)
        return out


@dataclass(frozen=True)
class ConvexHull:
    """Hull of a point set, kept as its sorted vertices and half-space facets."""

    vertices: np.ndarray
    facets: ConvexPolytope
    tol: float = field(default=0.0)

    @property
    def dimension(self) -> int:
        return self.facets.dimension

    def contains(self, x) -> bool:
        p = _as_point(x, self.dimension)
        return bool(np.all(self.facets.A @ p <= self.facets.b + self.tol))

    def contains_many(self, xs, chunk: int = 65536) -> np.ndarray:
        pts = _as_points(xs, self.dimension)
        out = np.empty(pts.shape[0], dtype=bool)
        A, b = self.facets.A, self.facets.b + self.tol
        for start in range(0, pts.shape[0], chunk):
            block = pts[start:start + chunk]
            out[start:start + chunk] = np.all(block @ A.T <= b, axis=1)
        return out


def polytope_contains(p: ConvexPolytope, x) -> bool:
    return p.contains(x)


def odd_polytope_contains(p: OddPolytope, x) -> bool:
    return p.contains(x)


def relationship_holds(rel: PolynomialInequality, x) -> int:
    return rel.holds(x)


def ground_truth_contains(gt: GroundTruthOdd, x) -> bool:
    return gt.contains(x)


def hull_contains(h: ConvexHull, x) -> bool:
    return h.contains(x)


def _hull_tolerance(points: np.ndarray) -> float:
    return 1e-9 * max(1.0, float(np.max(np.abs(points))) if points.size else 1.0)


def _full_hull(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (A, b, vertex indices) for a full-dimensional point set."""
    n = points.shape[1]
    if n == 1:
        lo, hi = int(np.argmin(points[:, 0])), int(np.argmax(points[:, 0]))
        if points[lo, 0] == points[hi, 0]:
            raise DegenerateHullError("all points coincide; hull is not full-dimensional")
        A = np.array([[1.0], [-1.0]])
        b = np.array([points[hi, 0], -points[lo, 0]])
        return A, b, np.array(sorted({lo, hi}))

    centered = points - points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv.size < n or sv[n - 1] <= sv[0] * 1e-12:
        raise DegenerateHullError(
            f"points span fewer than {n} dimensions; hull is not full-dimensional"
        )
    try:
        qh = _QhullHull(points)
    except QhullError as exc:
        raise DegenerateHullError(f"qhull rejected the point set: {exc}") from exc

    eq = qh.equations
    A, b = eq[:, :-1], -eq[:, -1]
    # Triangulated output splits non-simplicial facets into coplanar copies.
    key = np.round(np.hstack([A, b[:, None]]), 12)
    _, first = np.unique(key, axis=0, return_index=True)
    first.sort()
    A, b = A[first], b[first]
    order = np.lexsort(np.hstack([A, b[:, None]]).T[::-1])
    return A[order], b[order], np.asarray(qh.vertices)


def build_convex_hull(points, flat_axes: str = "error") -> ConvexHull:
    """Convex hull of ``points`` in half-space form.

    Parameters
    ----------
    points : array_like, shape (m, n)
    flat_axes : {"error", "equality"}
        What to do with coordinates that are constant across all points.
        ``"error"`` treats them like any other degeneracy. ``"equality"``
        builds the hull over the varying coordinates and pins each constant
        coordinate with a pair of opposing half-spaces.

    Raises
    ------
    DegenerateHullError
        If the (remaining) points are affinely dependent.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise DegenerateHullError("need a non-empty (m, n) point array")
    if not np.all(np.isfinite(pts)):
        raise ConfigError("hull points must be finite")
    if flat_axes not in ("error", "equality"):
        raise ConfigError(f"unknown flat_axes mode {flat_axes!r}")
    m, n = pts.shape
    if m < n + 1 and flat_axes == "error":
        raise DegenerateHullError(f"need at least {n + 1} points in {n} dimensions, got {m}")

    tol = _hull_tolerance(pts)
    flat = np.ptp(pts, axis=0) == 0.0
    if flat_axes == "equality" and flat.any():
        live = np.flatnonzero(~flat)
        if live.size == 0:
            raise DegenerateHullError("all points coincide")
        A_live, b, vidx = _full_hull(pts[:, live])
        A = np.zeros((A_live.shape[0], n))
        A[:, live] = A_live
        pins_A, pins_b = [], []
        for k in np.flatnonzero(flat):
            e = np.zeros(n)
            e[k] = 1.0
            pins_A += [e, -e]
            pins_b += [pts[0, k], -pts[0, k]]
        A = np.vstack([A, pins_A])
        b = np.concatenate([b, pins_b])
    else:
        A, b, vidx = _full_hull(pts)

    verts = pts[vidx]
    verts = verts[np.lexsort(verts.T[::-1])]
    verts.setflags(write=False)
    return ConvexHull(vertices=verts, facets=ConvexPolytope(A, b), tol=tol)


def ground_truth_from_dict(spec: dict) -> tuple[GroundTruthOdd, np.ndarray, np.ndarray]:
    """Build a ground truth from its JSON description.

    Returns the ground truth together with the bounding box (lower, upper)
    used for sampling. ``box`` is required. When ``polytopes`` is present the
    taxonomy is their union and the box only bounds sampling; otherwise the
    box itself is the taxonomy.
    """
    try:
        dim = int(spec["dimension"])
        lower = np.asarray(spec["box"]["lower"], dtype=np.float64)
        upper = np.asarray(spec["box"]["upper"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"ground truth spec needs 'dimension' and 'box': {exc}") from exc
    if lower.shape != (dim,) or upper.shape != (dim,):
        raise ConfigError(f"box bounds must have length {dim}")
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise ConfigError("box bounds must be finite")

    polys = spec.get("polytopes") or []
    if polys:
        parts = []
        for i, p in enumerate(polys):
            part = ConvexPolytope(p["A"], p["b"])
            if part.dimension != dim:
                raise ConfigError(f"polytope {i} has dimension {part.dimension}, expected {dim}")
            parts.append(part)
        taxonomy = OddPolytope(tuple(parts))
    else:
        taxonomy = OddPolytope((ConvexPolytope.box(lower, upper),))

    rels = []
    for i, r in enumerate(spec.get("relationships") or []):
        terms = tuple((t["coeff"], tuple(t["exponents"])) for t in r["terms"])
        rel = PolynomialInequality(terms, r.get("sense", "ge"))
        if rel.dimension != dim:
            raise ConfigError(f"relationship {i} has dimension {rel.dimension}, expected {dim}")
        rels.append(rel)
    return GroundTruthOdd(taxonomy, tuple(rels)), lower, upper


def load_ground_truth(path: str | PathLike):
    with open(path, encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}") from exc
    return ground_truth_from_dict(spec)
