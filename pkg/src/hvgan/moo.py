"""Pareto dominance, nondominated filtering, and hypervolume computation.

Orientation is carried on the data itself so that a Maximize vector can never
be compared against a Minimize vector by accident. Internally everything is
reduced to minimization by negating Maximize data; the public results are
orientation-independent where mathematics says they must be.

The exact hypervolume uses a recursive dimension sweep: points are sorted on
the last objective and the volume is integrated slab by slab, each slab being
a lower-dimensional hypervolume of the projected points seen so far. That is
quadratic-ish per level and entirely adequate for the supported sizes (at
most 6 objectives and 32 nondominated points).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from . import kernels

__all__ = [
    "Orientation",
    "ObjectiveVector",
    "PointSet",
    "ReferencePoint",
    "dominates",
    "pareto_filter",
    "hypervolume_exact",
    "hypervolume_mc",
    "MAX_HV_DIM",
    "MAX_HV_POINTS",
]

MAX_HV_DIM = 6
MAX_HV_POINTS = 32


class Orientation(Enum):
    MINIMIZE = "minimize"
    MAXIMIZE = "maximize"


def _check_finite_values(values: Sequence[float], what: str) -> tuple:
    vals = tuple(float(v) for v in values)
    if len(vals) == 0:
        raise ValueError(f"{what}: need at least one component")
    if not all(np.isfinite(v) for v in vals):
        raise ValueError(f"{what}: components must be finite, got {vals}")
    return vals


@dataclass(frozen=True)
class ObjectiveVector:
    """A single point in objective space with an explicit optimization sense."""

    values: tuple
    orientation: Orientation

    def __post_init__(self):
        object.__setattr__(
            self, "values", _check_finite_values(self.values, "ObjectiveVector")
        )
        if not isinstance(self.orientation, Orientation):
            raise ValueError(f"orientation must be an Orientation, got {self.orientation!r}")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ReferencePoint:
    """The corner that bounds the dominated region for hypervolume."""

    values: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "values", _check_finite_values(self.values, "ReferencePoint")
        )

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class PointSet:
    """An ordered collection of ObjectiveVectors, uniform in length and sense."""

    points: tuple = field(default_factory=tuple)

    def __post_init__(self):
        pts = tuple(self.points)
        for p in pts:
            if not isinstance(p, ObjectiveVector):
                raise ValueError(f"PointSet entries must be ObjectiveVector, got {p!r}")
        if pts:
            n = len(pts[0])
            sense = pts[0].orientation
            for i, p in enumerate(pts):
                if len(p) != n:
                    raise ValueError(
                        f"PointSet: point {i} has length {len(p)}, expected {n}"
                    )
                if p.orientation is not sense:
                    raise ValueError(
                        f"PointSet: point {i} has orientation {p.orientation}, "
                        f"expected {sense}"
                    )
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence[float]], orientation: Orientation) -> "PointSet":
        return cls(tuple(ObjectiveVector(tuple(r), orientation) for r in rows))

    @property
    def orientation(self) -> Orientation | None:
        return self.points[0].orientation if self.points else None

    @property
    def dim(self) -> int | None:
        return len(self.points[0]) if self.points else None

    def as_array(self) -> np.ndarray:
        if not self.points:
            return np.zeros((0, 0))
        return np.array([p.values for p in self.points], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.points)


def dominates(a: ObjectiveVector, b: ObjectiveVector) -> bool:
    """True iff a is at least as good as b everywhere and strictly better once."""
    if len(a) != len(b):
        raise ValueError(f"dominates: lengths differ ({len(a)} vs {len(b)})")
    if a.orientation is not b.orientation:
        raise ValueError(
            f"dominates: orientations differ ({a.orientation} vs {b.orientation})"
        )
    av = np.array(a.values)
    bv = np.array(b.values)
    if a.orientation is Orientation.MAXIMIZE:
        av, bv = -av, -bv
    return bool(np.all(av <= bv) and np.any(av < bv))


def _pareto_mask(arr: np.ndarray) -> np.ndarray:
    """Boolean mask of nondominated rows of a minimize-oriented (k,n) array."""
    k = arr.shape[0]
    keep = np.ones(k, dtype=bool)
    for i in range(k):
        if not keep[i]:
            continue
        # rows that dominate row i: <= everywhere and < somewhere
        leq = (arr <= arr[i]).all(axis=1)
        lt = (arr < arr[i]).any(axis=1)
        if np.any(leq & lt):
            keep[i] = False
    return keep


def pareto_filter(s: PointSet) -> PointSet:
    """Keep exactly the nondominated points, in input order, duplicates kept."""
    if len(s) == 0:
        return PointSet()
    arr = s.as_array()
    if s.orientation is Orientation.MAXIMIZE:
        arr = -arr
    keep = _pareto_mask(arr)
    return PointSet(tuple(p for p, k in zip(s.points, keep) if k))


def _to_min_arrays(s: PointSet, r) -> tuple[np.ndarray, np.ndarray]:
    """Validate shapes/orientation and return minimize-oriented (pts, ref)."""
    rv = r.values if isinstance(r, ReferencePoint) else tuple(float(v) for v in r)
    rv = _check_finite_values(rv, "ReferencePoint")
    ref = np.array(rv, dtype=np.float64)
    if len(s) == 0:
        return np.zeros((0, ref.size)), ref
    if s.dim != ref.size:
        raise ValueError(
            f"reference point has length {ref.size}, point set has dimension {s.dim}"
        )
    pts = s.as_array()
    if s.orientation is Orientation.MAXIMIZE:
        pts, ref = -pts, -ref
    bad = np.where((pts > ref[None, :]).any(axis=1))[0]
    if bad.size:
        i = int(bad[0])
        raise ValueError(
            f"reference point is not weakly dominated by point {i}: "
            f"point {tuple(pts[i])} vs reference {tuple(ref)} (minimize-oriented)"
        )
    return pts, ref


def _hv_recursive(pts: np.ndarray, ref: np.ndarray) -> float:
    """Exact hypervolume of minimize-oriented points against ref."""
    if pts.shape[0] == 0:
        return 0.0
    pts = np.unique(pts, axis=0)
    pts = pts[_pareto_mask(pts)]
    n = pts.shape[1]
    if n == 1:
        return float(ref[0] - pts[:, 0].min())
    if n == 2:
        order = np.argsort(pts[:, 0], kind="stable")
        xs = pts[order, 0]
        ys = pts[order, 1]
        area = 0.0
        for i in range(len(xs)):
            next_x = xs[i + 1] if i + 1 < len(xs) else ref[0]
            area += (next_x - xs[i]) * (ref[1] - ys[i])
        return float(area)
    order = np.argsort(pts[:, -1], kind="stable")
    pts = pts[order]
    levels = np.unique(pts[:, -1])
    total = 0.0
    for m, z in enumerate(levels):
        z_next = levels[m + 1] if m + 1 < len(levels) else ref[-1]
        if z_next == z:
            continue
        active = pts[pts[:, -1] <= z, :-1]
        total += (z_next - z) * _hv_recursive(active, ref[:-1])
    return float(total)


def hypervolume_exact(s: PointSet, r) -> float:
    """Volume of the union of boxes spanned by each point and the reference."""
    pts, ref = _to_min_arrays(s, r)
    if pts.shape[0] == 0:
        return 0.0
    if ref.size > MAX_HV_DIM:
        raise ValueError(
            f"hypervolume_exact supports at most {MAX_HV_DIM} objectives, got {ref.size}"
        )
    nd = pts[_pareto_mask(pts)]
    if nd.shape[0] > MAX_HV_POINTS:
        raise ValueError(
            f"hypervolume_exact supports at most {MAX_HV_POINTS} nondominated "
            f"points, got {nd.shape[0]}"
        )
    return _hv_recursive(nd, ref)


def hypervolume_mc(
    s: PointSet, r, samples: int, seed: int
) -> tuple[float, float]:
    """Monte-Carlo hypervolume estimate with its binomial standard error.

    Samples uniformly in the box between the componentwise best corner of the
    set and the reference point; the dominated fraction scales the box volume.
    """
    samples = int(samples)
    if samples < 1:
        raise ValueError(f"hypervolume_mc: samples must be >= 1, got {samples}")
    pts, ref = _to_min_arrays(s, r)
    if pts.shape[0] == 0:
        return 0.0, 0.0
    ideal = pts.min(axis=0)
    box_vol = float(np.prod(ref - ideal))
    if box_vol == 0.0:
        return 0.0, 0.0
    rng = np.random.default_rng(seed)
    draws = rng.uniform(ideal, ref, size=(samples, ref.size))
    hits = kernels.count_dominated(draws, pts)
    frac = hits / samples
    est = frac * box_vol
    stderr = box_vol * float(np.sqrt(frac * (1.0 - frac) / samples))
    return est, stderr
