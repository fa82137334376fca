"""Set-valued discrete dynamics on box collections and finite point clouds.

Cells live on a regular grid inside an outer bounding box; a cell is stored
by its integer grid index.  ``resolution`` is the cell edge length, so a
cell's half-width is ``resolution / 2``.  Cell images are outer
approximations: each sample point's images are inflated by the map's
expansion bound times the sample half-width and every grid cell meeting the
inflated box is kept.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

log = logging.getLogger(__name__)

METRICS = ("H", "V", "E")


class MapEvaluationError(RuntimeError):
    """A set-valued map failed on a sample point of some box."""


@dataclass(frozen=True, eq=False)
class BoxCollection:
    """Finite union of grid cells.

    ``indices`` is an ``(m, d)`` integer array of cell indices, sorted and
    unique; cell ``i`` spans ``lower + resolution * [i, i + 1]`` per axis.
    """

    lower: tuple
    upper: tuple
    resolution: float
    indices: np.ndarray
    converged: bool = True

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        if len(lower) != len(upper) or not lower:
            raise ValueError("bounding box corners must share a positive dimension")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if any(hi <= lo for lo, hi in zip(lower, upper)):
            raise ValueError("empty bounding box")
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, len(lower))
        idx = np.unique(idx, axis=0)
        shape = self.shape_for(lower, upper, self.resolution)
        if idx.size and ((idx < 0).any() or (idx >= np.array(shape)).any()):
            raise ValueError("box outside the declared bounding box")
        idx.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "indices", idx)

    @staticmethod
    def shape_for(lower, upper, resolution):
        return tuple(int(round((hi - lo) / resolution)) for lo, hi in zip(lower, upper))

    @classmethod
    def cover(cls, lower, upper, resolution, box_lower=None, box_upper=None):
        """All cells of the grid on ``[lower, upper]`` meeting ``[box_lower, box_upper]``."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        blo = lower if box_lower is None else np.atleast_1d(np.asarray(box_lower, dtype=float))
        bhi = upper if box_upper is None else np.atleast_1d(np.asarray(box_upper, dtype=float))
        shape = np.array(cls.shape_for(lower, upper, resolution))
        lo = np.clip(np.floor((blo - lower) / resolution).astype(np.int64), 0, shape - 1)
        hi = np.clip(np.ceil((bhi - lower) / resolution).astype(np.int64) - 1, 0, shape - 1)
        hi = np.maximum(hi, lo)
        axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lower))
        return cls(tuple(lower), tuple(upper), resolution, grid)

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def shape(self) -> tuple:
        return self.shape_for(self.lower, self.upper, self.resolution)

    @property
    def centers(self) -> np.ndarray:
        return np.asarray(self.lower) + self.resolution * (self.indices + 0.5)

    @property
    def half_widths(self) -> np.ndarray:
        return np.full(self.indices.shape, self.resolution / 2)

    def __len__(self):
        return len(self.indices)

    def keys(self) -> set:
        return set(map(tuple, self.indices.tolist()))

    def with_indices(self, indices, converged=True) -> "BoxCollection":
        return BoxCollection(self.lower, self.upper, self.resolution,
                             np.asarray(list(indices), dtype=np.int64).reshape(-1, self.dimension),
                             converged)

    def same_cells(self, other: "BoxCollection") -> bool:
        return (self.lower == other.lower and self.upper == other.upper
                and self.resolution == other.resolution
                and np.array_equal(self.indices, other.indices))

    def total_diameter(self) -> float:
        """Sum over axes of the extent of the union's bounding box (1-D: its length)."""
        if not len(self):
            return 0.0
        lo = self.indices.min(axis=0)
        hi = self.indices.max(axis=0) + 1
        return float(np.max((hi - lo) * self.resolution))

    def to_json(self) -> str:
        rows = [list(c) + list(h) for c, h in zip(self.centers.tolist(), self.half_widths.tolist())]
        return json.dumps({
            "type": "BoxCollection",
            "dimension": self.dimension,
            "resolution": self.resolution,
            "bounds": [list(self.lower), list(self.upper)],
            "converged": self.converged,
            "boxes": rows,
        })

    @classmethod
    def from_json(cls, text: str) -> "BoxCollection":
        obj = json.loads(text)
        d = obj["dimension"]
        lower, upper = obj["bounds"]
        res = obj["resolution"]
        rows = np.asarray(obj["boxes"], dtype=float).reshape(-1, 2 * d)
        idx = np.round((rows[:, :d] - np.asarray(lower)) / res - 0.5).astype(np.int64)
        return cls(tuple(lower), tuple(upper), res, idx, obj.get("converged", True))


@dataclass(frozen=True)
class SetValuedMap:
    """``evaluate(x)`` returns the finite, nonempty image list of point ``x``
    as an ``(m, d)`` array.  ``expansion`` bounds how far images of points
    within sup-distance ``h`` of ``x`` can be from the images of ``x``
    (``expansion * h``); a callable receives ``(center, half_width)``."""

    evaluate: Callable[[np.ndarray], np.ndarray]
    expansion: float | Callable[[np.ndarray, float], float]
    name: str = "map"

    def images(self, x) -> np.ndarray:
        y = np.atleast_2d(np.asarray(self.evaluate(np.asarray(x, dtype=float)), dtype=float))
        if y.size == 0:
            raise MapEvaluationError(f"{self.name}: empty image at {np.asarray(x).tolist()}")
        if not np.all(np.isfinite(y)):
            raise MapEvaluationError(f"{self.name}: non-finite image at {np.asarray(x).tolist()}")
        return y

    def bound(self, center, half_width) -> float:
        if callable(self.expansion):
            return float(self.expansion(center, half_width))
        return float(self.expansion)


def _sample_points(center, half, per_dim):
    """Centers of a ``per_dim^d`` sub-grid of the box and their half-width."""
    d = len(center)
    sub = half / per_dim
    offs = -half + sub * (2 * np.arange(per_dim) + 1)
    grid = np.stack(np.meshgrid(*([offs] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return center + grid, sub


def _cell_image(F: SetValuedMap, B: BoxCollection, index, per_dim: int) -> set:
    lower = np.asarray(B.lower)
    shape = np.array(B.shape)
    res = B.resolution
    center = lower + res * (np.asarray(index) + 0.5)
    out = set()
    escaped = 0
    pts, sub = _sample_points(center, res / 2, per_dim)
    for p in pts:
        try:
            ys = F.images(p)
            r = F.bound(p, sub) * sub
        except MapEvaluationError as exc:
            raise MapEvaluationError(f"{exc} (box center {center.tolist()}, half-width {res / 2})") from exc
        except Exception as exc:
            raise MapEvaluationError(
                f"{F.name} failed at {p.tolist()} in box center {center.tolist()}: {exc}") from exc
        # cells whose interior meets the image box [y - r, y + r] (the cell containing a degenerate box)
        lo = np.floor((ys - r - lower) / res).astype(np.int64)
        hi = np.ceil((ys + r - lower) / res).astype(np.int64) - 1
        hi = np.maximum(hi, lo)
        for a, b in zip(lo, hi):
            ca, cb = np.clip(a, 0, shape - 1), np.clip(b, 0, shape - 1)
            if (a < 0).any() or (b >= shape).any():
                escaped += 1
            if (ca > b).any() or (cb < a).any():
                continue
            for cell in np.stack(np.meshgrid(*[np.arange(s, e + 1) for s, e in zip(ca, cb)],
                                             indexing="ij"), -1).reshape(-1, len(index)):
                out.add(tuple(int(c) for c in cell))
    if escaped:
        log.warning("%s: %d image boxes of cell %s leave the bounding box", F.name, escaped, tuple(index))
    return out


class CellMap:
    """Memoized cell-to-cells transition of ``F`` on the grid of ``B``."""

    def __init__(self, F: SetValuedMap, grid: BoxCollection, samples_per_dim: int = 1):
        self.F = F
        self.grid = grid
        self.per_dim = samples_per_dim
        self._cache: dict = {}

    def successors(self, cell) -> set:
        try:
            return self._cache[cell]
        except KeyError:
            s = _cell_image(self.F, self.grid, cell, self.per_dim)
            self._cache[cell] = s
            return s

    def image(self, cells) -> set:
        out = set()
        for c in sorted(cells):
            out |= self.successors(c)
        return out


def image_of_boxes(F: SetValuedMap, B: BoxCollection, samples_per_dim: int = 1) -> BoxCollection:
    """Outer cell cover of ``F(B)`` at the resolution of ``B``."""
    if not len(B):
        raise ValueError("image of an empty box collection")
    cm = CellMap(F, B, samples_per_dim)
    return B.with_indices(sorted(cm.image(B.keys())))


def positive_orbit(F: SetValuedMap, B: BoxCollection, start: int, stop: int,
                   samples_per_dim: int = 1) -> BoxCollection:
    """Union of the cell iterates ``F^n(B)`` for ``start <= n <= stop``."""
    if not 0 <= start <= stop:
        raise ValueError("need 0 <= start <= stop")
    cm = CellMap(F, B, samples_per_dim)
    cur = B.keys()
    acc = set(cur) if start == 0 else set()
    for n in range(1, stop + 1):
        cur = cm.image(cur)
        if n >= start:
            acc |= cur
    return B.with_indices(sorted(acc))


def omega_limit(F: SetValuedMap, B0: BoxCollection, max_iters: int = 10_000,
                samples_per_dim: int = 1) -> BoxCollection:
    """Cell enclosure of the omega-limit set of ``B0``.

    Iterates ``C <- F(C) & C`` from ``C = B0`` until two successive covers
    coincide.  The result is flagged ``converged=False`` when ``max_iters``
    is exhausted first.
    """
    cm = CellMap(F, B0, samples_per_dim)
    cur = B0.keys()
    for _ in range(max_iters):
        nxt = cm.image(cur) & cur
        if nxt == cur:
            return B0.with_indices(sorted(cur), converged=True)
        cur = nxt
    log.warning("omega_limit did not stabilize within %d iterations", max_iters)
    return B0.with_indices(sorted(cur), converged=False)


def is_positively_invariant(F: SetValuedMap, B: BoxCollection, samples_per_dim: int = 1) -> bool:
    return image_of_boxes(F, B, samples_per_dim).keys() <= B.keys() if len(B) else True


# -- point clouds -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PointCloud:
    """Finite sample of a phase space; distances are Euclidean in the stored
    coordinates, which must already be scaled for the tagged metric."""

    points: np.ndarray
    metric: str = "E"

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric tag {self.metric!r}")
        p = np.array(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.ndim != 2:
            raise ValueError("points must form a 2-D array")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    def __len__(self):
        return len(self.points)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def to_json(self) -> str:
        return json.dumps({"type": "PointCloud", "metric": self.metric,
                           "points": self.points.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "PointCloud":
        obj = json.loads(text)
        pts = np.asarray(obj["points"], dtype=float)
        return cls(pts.reshape(len(pts), -1), obj.get("metric", "E"))


def hausdorff_semidist(B: PointCloud, C: PointCloud, chunk: int = 1024) -> float:
    """``max_{b in B} min_{c in C} |b - c|`` over finite clouds (asymmetric)."""
    if not len(B) or not len(C):
        raise ValueError("undefined semidistance: empty cloud")
    if B.dimension != C.dimension:
        raise ValueError("clouds have different dimensions")
    if B.metric != C.metric:
        raise ValueError(f"metric mismatch: {B.metric} vs {C.metric}")
    best, best_pair = -1.0, (0, 0)
    for s in range(0, len(B), chunk):
        d2 = cdist(B.points[s:s + chunk], C.points, "sqeuclidean")
        j = d2.argmin(axis=1)
        m = d2[np.arange(len(j)), j]
        i = int(m.argmax())
        if m[i] > best:
            best, best_pair = m[i], (s + i, int(j[i]))
    i, j = best_pair
    return math.dist(B.points[i], C.points[j])


def covering_diameter(B: PointCloud, ball_budget: int) -> float:
    """Greedy (farthest-point) estimate of the smallest common diameter of
    ``ball_budget`` sets covering ``B``.

    Never below the optimum and at most twice it; nonincreasing in the budget.
    Ties go to the lowest point index.
    """
    if not len(B):
        raise ValueError("covering diameter of an empty cloud")
    if ball_budget < 1:
        raise ValueError("ball_budget must be >= 1")
    pts = B.points
    n = len(pts)
    centers = [0]
    d = np.sqrt(((pts - pts[0]) ** 2).sum(axis=1))
    assign = np.zeros(n, dtype=int)
    best = _max_cluster_diameter(pts, assign, 1)
    for m in range(1, min(ball_budget, n)):
        nxt = int(np.argmax(d))  # argmax returns the lowest index on ties
        if d[nxt] == 0.0:
            break
        centers.append(nxt)
        dn = np.sqrt(((pts - pts[nxt]) ** 2).sum(axis=1))
        closer = dn < d
        assign[closer] = m
        d = np.minimum(d, dn)
        best = min(best, _max_cluster_diameter(pts, assign, m + 1))
    return best


def _max_cluster_diameter(pts, assign, m):
    out = 0.0
    for c in range(m):
        q = pts[assign == c]
        if len(q) > 1:
            out = max(out, float(np.sqrt(cdist(q, q, "sqeuclidean").max())))
    return out


# -- semigroup spot check -----------------------------------------------------

@dataclass
class SemigroupReport:
    n: int
    m: int
    discrepancies: list = field(default_factory=list)
    direct_sizes: list = field(default_factory=list)
    composed_sizes: list = field(default_factory=list)

    @property
    def max_discrepancy(self) -> float:
        return max(self.discrepancies, default=0.0)


def _dedup(points: np.ndarray, tol: float) -> np.ndarray:
    keep: list = []
    for p in points:
        if all(np.max(np.abs(p - q)) > tol for q in keep):
            keep.append(p)
    return np.array(keep)


def iterate_points(F: SetValuedMap, x, n: int, tol: float = 1e-12) -> np.ndarray:
    """Enumerate ``F^n(x)`` with near-duplicates merged."""
    cur = np.atleast_2d(np.asarray(x, dtype=float))
    for _ in range(n):
        cur = _dedup(np.concatenate([F.images(p) for p in cur]), tol)
    return cur


def semigroup_property_check(F: SetValuedMap, samples: PointCloud | Sequence, n: int, m: int,
                             tol: float = 1e-12) -> SemigroupReport:
    """Compare ``F^(n+m)(x)`` with ``F^n(F^m(x))`` for every sample ``x``.

    The discrepancy is the symmetric Hausdorff distance between the two
    enumerations; nothing is raised.
    """
    if n < 0 or m < 0:
        raise ValueError("n and m must be nonnegative")
    pts = samples.points if isinstance(samples, PointCloud) else np.atleast_2d(samples)
    rep = SemigroupReport(n, m)
    for x in pts:
        direct = iterate_points(F, x, n + m, tol)
        inner = iterate_points(F, x, m, tol)
        composed = _dedup(np.concatenate([iterate_points(F, y, n, tol) for y in inner]), tol)
        a, b = PointCloud(direct), PointCloud(composed)
        rep.discrepancies.append(max(hausdorff_semidist(a, b), hausdorff_semidist(b, a)))
        rep.direct_sizes.append(len(direct))
        rep.composed_sizes.append(len(composed))
    return rep


# -- demo maps ----------------------------------------------------------------

def contraction() -> SetValuedMap:
    return SetValuedMap(lambda x: np.atleast_2d(x / 2), 0.5, "contraction")


def ifs_halves() -> SetValuedMap:
    return SetValuedMap(lambda x: np.stack([x / 2, x / 2 + 0.5]), 0.5, "ifs")


def plus_minus() -> SetValuedMap:
    return SetValuedMap(lambda x: np.stack([x / 2, -x / 2]), 0.5, "plusminus")


DEMOS = {
    "contraction": (contraction, (-1.0,), (1.0,)),
    "ifs": (ifs_halves, (0.0,), (1.0,)),
    "plusminus": (plus_minus, (-1.0,), (1.0,)),
}


def run_demo(name: str, resolution: float = 2.0**-10) -> tuple[BoxCollection, dict]:
    """Cell attractor of a named one-dimensional demo map plus an invariance report."""
    try:
        make, lower, upper = DEMOS[name]
    except KeyError:
        raise ValueError(f"unknown demo {name!r}; choose from {sorted(DEMOS)}") from None
    F = make()
    B0 = BoxCollection.cover(lower, upper, resolution)
    A = omega_limit(F, B0)
    img = image_of_boxes(F, A)
    report = {
        "demo": name,
        "resolution": resolution,
        "cells": len(A),
        "converged": A.converged,
        "positively_invariant": img.keys() <= A.keys(),
        "invariant": img.keys() == A.keys(),
        "extent": [float(A.centers.min() - resolution / 2), float(A.centers.max() + resolution / 2)],
    }
    return A, report
