"""Dense Hermitian eigenproblems, torus grids, torus extrema and interval unions."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .kernels import ConvergenceFailure, householder_ql_eigh

__all__ = ["ConvergenceFailure", "MalformedInterval", "TorusGrid", "IntervalSet", "TorusExtrema",
           "eigh", "band_to_dense", "banded_eigvals", "minimize_on_torus", "union_measure",
           "worker_count", "parallel_map"]


class MalformedInterval(ValueError):
    pass


def eigh(A, want_vectors: bool = False, method: str = "lapack"):
    """Ascending eigenvalues (and orthonormal eigenvectors) of a Hermitian matrix.

    ``method="lapack"`` calls numpy's LAPACK driver; ``"householder"`` runs the
    in-house Householder + implicit QL kernel.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {A.shape}")
    if method == "householder":
        return householder_ql_eigh(A, want_vectors)
    if method != "lapack":
        raise ValueError(f"unknown eigensolver {method!r}")
    try:
        if want_vectors:
            return np.linalg.eigh(A)
        return np.linalg.eigvalsh(A)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc


def band_to_dense(ab: np.ndarray) -> np.ndarray:
    """Expand upper band storage ``ab[bw + i - j, j]`` into a full Hermitian matrix."""
    bw, n = ab.shape[0] - 1, ab.shape[1]
    A = np.zeros((n, n), dtype=ab.dtype)
    for off in range(1, bw + 1):
        idx = np.arange(n - off)
        A[idx, idx + off] = ab[bw - off, off:]
    A = A + A.conj().T
    A[np.arange(n), np.arange(n)] = ab[bw].real
    return A


def banded_eigvals(ab: np.ndarray, upper: float | None = None, lower: float | None = None) -> np.ndarray:
    """Eigenvalues in ``(lower, upper]`` of a Hermitian band matrix, ascending."""
    if ab.shape[1] == 0:
        return np.zeros(0)
    if upper is None and lower is None:
        return scipy.linalg.eig_banded(ab, lower=False, eigvals_only=True)
    bw = ab.shape[0] - 1
    # Gershgorin bounds keep the LAPACK value range finite
    rowsum = np.zeros(ab.shape[1])
    for off in range(1, bw + 1):
        vals = np.abs(ab[bw - off, off:])
        rowsum[:-off] += vals
        rowsum[off:] += vals
    diag = ab[bw].real
    g_lo = float(np.min(diag - rowsum)) - 1.0
    g_hi = float(np.max(diag + rowsum)) + 1.0
    lo = g_lo if lower is None else max(lower, g_lo)
    hi = g_hi if upper is None else min(upper, g_hi)
    if hi <= lo:
        return np.zeros(0)
    return scipy.linalg.eig_banded(ab, lower=False, eigvals_only=True, select="v",
                                   select_range=(lo, hi))


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on (-pi, pi]^dim; always contains 0, and pi when N is even."""
    dim: int
    points_per_dim: int = 64

    def __post_init__(self):
        if self.dim < 0 or self.points_per_dim < 1:
            raise ValueError("grid needs dim >= 0 and points_per_dim >= 1")

    @cached_property
    def axis(self) -> np.ndarray:
        N = self.points_per_dim
        vals = 2 * np.pi * np.arange(N) / N
        vals = np.where(vals > np.pi, vals - 2 * np.pi, vals)
        return np.sort(vals)

    @property
    def spacing(self) -> float:
        return 2 * np.pi / self.points_per_dim

    @cached_property
    def points(self) -> np.ndarray:
        if self.dim == 0:
            return np.zeros((1, 0))
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def __len__(self) -> int:
        return self.points_per_dim ** self.dim


def wrap_angle(x):
    """Map angles into (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=np.float64) + np.pi, 2 * np.pi) - np.pi
    return np.where(y <= -np.pi, y + 2 * np.pi, y)


@dataclass(frozen=True)
class TorusExtrema:
    min_value: float
    argmin: np.ndarray
    max_value: float
    argmax: np.ndarray
    grid_min: float
    grid_max: float


def _parabola_step(fm, f0, fp, h, sign):
    # sign=+1 for a minimum, -1 for a maximum
    curv = sign * (fm - 2 * f0 + fp)
    if not np.isfinite(curv) or curv <= 0:
        return 0.0
    return float(np.clip(h * (fm - fp) / (2 * (fm - 2 * f0 + fp)), -h / 2, h / 2))


def minimize_on_torus(f, grid: TorusGrid, refine: bool = True, values: np.ndarray | None = None) -> TorusExtrema:
    """Grid extrema of ``f`` over the torus, optionally polished by one parabola pass.

    ``f`` maps an (M, dim) array of points to M values (NaN marks "undefined").
    Ties go to the lexicographically smallest grid point.
    """
    pts = grid.points
    vals = np.asarray(f(pts) if values is None else values, dtype=np.float64).reshape(len(pts))
    if np.all(np.isnan(vals)):
        raise ValueError("function undefined on the whole grid")
    i_min, i_max = int(np.nanargmin(vals)), int(np.nanargmax(vals))
    gmin, gmax = float(vals[i_min]), float(vals[i_max])
    best = [gmin, pts[i_min].copy(), gmax, pts[i_max].copy()]
    if refine and grid.dim > 0 and grid.points_per_dim >= 3:
        N, h = grid.points_per_dim, grid.spacing
        cube = vals.reshape((N,) * grid.dim)
        cands = []
        for idx_flat, sign in ((i_min, 1), (i_max, -1)):
            idx = np.unravel_index(idx_flat, cube.shape)
            step = np.zeros(grid.dim)
            for ax in range(grid.dim):
                lo, hi = list(idx), list(idx)
                lo[ax] = (idx[ax] - 1) % N
                hi[ax] = (idx[ax] + 1) % N
                step[ax] = _parabola_step(cube[tuple(lo)], cube[idx], cube[tuple(hi)], h, sign)
            cands.append(wrap_angle(pts[idx_flat] + step))
        if any(np.any(c != p) for c, p in zip(cands, (pts[i_min], pts[i_max]))):
            cv = np.asarray(f(np.array(cands)), dtype=np.float64)
            if np.isfinite(cv[0]) and cv[0] < gmin:
                best[0], best[1] = float(cv[0]), cands[0]
            if np.isfinite(cv[1]) and cv[1] > gmax:
                best[2], best[3] = float(cv[1]), cands[1]
    return TorusExtrema(best[0], best[1], best[2], best[3], gmin, gmax)


@dataclass(frozen=True)
class IntervalSet:
    intervals: tuple[tuple[float, float], ...]

    @property
    def measure(self) -> float:
        return float(sum(b - a for a, b in self.intervals))

    def __len__(self):
        return len(self.intervals)

    def gaps(self) -> list[tuple[float, float]]:
        return [(self.intervals[i][1], self.intervals[i + 1][0]) for i in range(len(self.intervals) - 1)]


def union_measure(intervals) -> tuple[IntervalSet, float]:
    """Merge overlapping or touching closed intervals and return the total length."""
    items = []
    for a, b in intervals:
        a, b = float(a), float(b)
        if not a <= b:
            raise MalformedInterval(f"interval [{a}, {b}] has a > b")
        items.append((a, b))
    items.sort()
    merged: list[list[float]] = []
    for a, b in items:
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    out = IntervalSet(tuple((a, b) for a, b in merged))
    return out, out.measure


def worker_count() -> int:
    """Worker cap from GUIDED_BANDS_THREADS (0 or unset means one per CPU)."""
    raw = os.environ.get("GUIDED_BANDS_THREADS", "0").strip() or "0"
    n = int(raw)
    return n if n > 0 else (os.cpu_count() or 1)


def parallel_map(fn, items):
    """Ordered map over independent work items using a thread pool."""
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
