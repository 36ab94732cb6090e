"""Spectra of the periodic operator, the guided fibers and the modified cylinder."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .floquet import (full_fibers, modified_band, modified_fibers, truncated_band, window_for)
from .graph import CylinderModel, GuidedPotential
from .numerics import (TorusGrid, banded_eigvals, minimize_on_torus, parallel_map,
                       union_measure)

log = logging.getLogger(__name__)

DEFAULT_R_MAX = {1: 2048, 2: 64}


class WindowExhausted(RuntimeError):
    """Raised in strict mode when window doubling hits R_max with unresolved candidates."""


@dataclass(frozen=True)
class ConvergencePolicy:
    r0: int | None = None
    r_max: int | None = None
    tol_window: float = 1e-9
    margin: float | None = None
    strict: bool = False

    def __post_init__(self):
        if not self.tol_window > 0:
            raise ValueError("tol_window must be positive")
        if self.margin is not None and not self.margin > 0:
            raise ValueError("margin must be positive")

    def start_radius(self, Q: GuidedPotential | None) -> int:
        if self.r0 is not None:
            return int(self.r0)
        return (Q.max_shift if Q is not None else 0) + 10

    def max_radius(self, dim_perp: int, start: int) -> int:
        if self.r_max is not None:
            return int(self.r_max)
        # beyond two perpendicular dimensions one window is all that fits
        return DEFAULT_R_MAX.get(dim_perp, start)

    def resolved_margin(self, rho: float) -> float:
        if self.margin is not None:
            return self.margin
        return max(1e-8, 1e-6 * abs(rho))


# ------------------------------------------------------------------- H0 bands

@dataclass
class BandStructure:
    points: np.ndarray
    branches: np.ndarray
    bands: list
    rho: float
    inf0: float
    flat_flags: list
    shift: float = 0.0

    @property
    def total_length(self) -> float:
        return float(sum(b - a for a, b in self.bands))

    def union(self):
        return union_measure(self.bands)[0]


def _eigvalsh_stack(mats: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh(mats)


def h0_spectrum(cyl: CylinderModel, grid_full: TorusGrid, normalize: bool = True,
                tol_flat: float | None = None, chunk: int = 4096) -> BandStructure:
    """Band structure of H0 = Delta + W sampled on a grid over the full torus.

    With ``normalize`` the returned values correspond to ``W - shift`` where
    ``shift`` is the grid infimum, so that the spectrum starts at 0.
    """
    if grid_full.dim != cyl.dim_total:
        raise ValueError("grid dimension must equal dim_total")
    pts = grid_full.points
    branches = np.concatenate([_eigvalsh_stack(full_fibers(cyl, pts[i:i + chunk]))
                               for i in range(0, len(pts), chunk)])
    shift = float(branches[:, 0].min()) if normalize else 0.0
    if normalize:
        branches = branches - shift
    lo, hi = branches.min(axis=0), branches.max(axis=0)
    rho = float(hi[-1])
    tol = 1e-10 * max(1.0, rho) if tol_flat is None else tol_flat
    return BandStructure(points=pts, branches=branches,
                         bands=[(float(a), float(b)) for a, b in zip(lo, hi)],
                         rho=rho, inf0=float(lo[0]),
                         flat_flags=[bool(b - a < tol) for a, b in zip(lo, hi)], shift=shift)


@dataclass(frozen=True)
class Floor:
    m_minus: float
    m_plus: float
    argmin: np.ndarray
    argmax: np.ndarray


def _fiber_eigs_at(cyl: CylinderModel, theta, phis) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    thetas = np.hstack([np.broadcast_to(theta, (len(phis), len(theta))), phis])
    return _eigvalsh_stack(full_fibers(cyl, thetas))


def essential_floor(cyl: CylinderModel, theta, grid_perp: TorusGrid, refine: bool = True) -> Floor:
    """Lower and upper endpoints of the spectrum of H0(theta)."""
    ev = _fiber_eigs_at(cyl, theta, grid_perp.points)
    low = minimize_on_torus(lambda p: _fiber_eigs_at(cyl, theta, p)[:, 0], grid_perp, refine, values=ev[:, 0])
    high = minimize_on_torus(lambda p: _fiber_eigs_at(cyl, theta, p)[:, -1], grid_perp, refine, values=ev[:, -1])
    return Floor(low.min_value, high.max_value, low.argmin, high.argmax)


def fiber_band_intervals(cyl: CylinderModel, theta, grid_perp: TorusGrid) -> list[tuple[float, float]]:
    """Per-branch ranges over perpendicular quasimomenta for H0(theta)."""
    ev = _fiber_eigs_at(cyl, theta, grid_perp.points)
    return [(float(a), float(b)) for a, b in zip(ev.min(axis=0), ev.max(axis=0))]


# ------------------------------------------------------ certified eigenvalues

@dataclass
class CertifiedEigs:
    values: list
    diffs: list
    unresolved: list
    radius: int
    threshold: float
    exhausted: bool = False


def certify_below(build_band, threshold: float, policy: ConvergencePolicy, r0: int, r_max: int) -> CertifiedEigs:
    """Eigenvalues below ``threshold`` that agree between windows R and 2R.

    Dirichlet truncations can only overestimate eigenvalues, so any value
    below the threshold is genuine; doubling continues until each candidate
    is stable to ``tol_window`` or the radius cap is reached.
    """
    R = r0
    prev = banded_eigvals(build_band(R), upper=threshold)
    while True:
        if 2 * R > r_max:
            return CertifiedEigs([], [], [float(x) for x in prev], R, threshold, exhausted=len(prev) > 0)
        cur = banded_eigvals(build_band(2 * R), upper=threshold)
        diffs = [abs(cur[j] - prev[j]) if j < len(prev) else np.inf for j in range(len(cur))]
        ok = [d < policy.tol_window for d in diffs]
        if all(ok):
            return CertifiedEigs([float(x) for x in cur], [float(d) for d in diffs], [], 2 * R, threshold)
        if 4 * R > r_max:
            acc = [float(cur[j]) for j in range(len(cur)) if ok[j]]
            unres = [float(cur[j]) for j in range(len(cur)) if not ok[j]]
            return CertifiedEigs(acc, [float(d) for d, o in zip(diffs, ok) if o], unres, 2 * R,
                                 threshold, exhausted=True)
        R *= 2
        prev = cur


def _handle(result: CertifiedEigs, policy: ConvergencePolicy, what: str) -> CertifiedEigs:
    if result.exhausted:
        msg = f"{what}: window radius cap reached with {len(result.unresolved)} unresolved candidate(s)"
        if policy.strict:
            raise WindowExhausted(msg)
        log.warning(msg)
    return result


@dataclass
class ThetaEigs:
    theta: np.ndarray
    values: list
    diffs: list
    unresolved: list
    floor: float
    radius: int
    exhausted: bool


def guided_eigenvalues(cyl: CylinderModel, Q: GuidedPotential, theta, policy: ConvergencePolicy | None = None,
                       grid_perp: TorusGrid | None = None, rho: float | None = None,
                       floor: Floor | None = None) -> ThetaEigs:
    """Certified discrete eigenvalues of H(theta) below the essential floor m_-(theta)."""
    policy = policy or ConvergencePolicy()
    theta = np.asarray(theta, dtype=np.float64).reshape(cyl.dim_guided)
    grid_perp = grid_perp or TorusGrid(cyl.dim_perp, 64)
    if floor is None:
        floor = essential_floor(cyl, theta, grid_perp)
    if Q is None or Q.support_size == 0:
        return ThetaEigs(theta, [], [], [], floor.m_minus, 0, False)
    margin = policy.resolved_margin(floor.m_plus if rho is None else rho)
    r0 = policy.start_radius(Q)
    r_max = policy.max_radius(cyl.dim_perp, r0)
    res = certify_below(lambda R: truncated_band(cyl, Q, theta, window_for(cyl, R)),
                        floor.m_minus - margin, policy, r0, r_max)
    _handle(res, policy, f"theta={theta.tolist()}")
    return ThetaEigs(theta, res.values, res.diffs, res.unresolved, floor.m_minus, res.radius, res.exhausted)


# -------------------------------------------------------------- guided bands

@dataclass
class GuidedBandSet:
    points: np.ndarray
    curves: np.ndarray          # (M, N) with NaN where the j-th eigenvalue is absent
    floors: np.ndarray
    bands: list
    complete_flags: list
    sigma_o: list               # band ∩ (-inf, 0], or None when empty
    unresolved: list            # per grid point, unresolved candidate values
    exhausted: bool = False

    @property
    def count(self) -> int:
        return len(self.bands)

    @property
    def n_g(self) -> int:
        return sum(s is not None for s in self.sigma_o)

    def measure(self) -> float:
        return union_measure(self.bands)[1] if self.bands else 0.0


def assemble_guided_bands(curves: list[ThetaEigs], grid: TorusGrid, evaluator=None) -> GuidedBandSet:
    """Bands as ranges of the ascending eigenvalue curves over the grid.

    ``evaluator(theta) -> ThetaEigs`` enables one parabola-refinement pass on
    each band endpoint; refined endpoints never shrink the grid range.
    """
    pts = np.array([c.theta for c in curves]).reshape(len(curves), grid.dim)
    n = max((len(c.values) for c in curves), default=0)
    table = np.full((len(curves), n), np.nan)
    for i, c in enumerate(curves):
        table[i, :len(c.values)] = c.values
    bands, complete, sigma_o = [], [], []
    cache: dict = {}

    def value_at(theta, j):
        key = tuple(np.round(theta, 15))
        if key not in cache:
            cache[key] = evaluator(np.asarray(theta))
        vals = cache[key].values
        return vals[j] if j < len(vals) else np.nan

    for j in range(n):
        col = table[:, j]
        lo, hi = float(np.nanmin(col)), float(np.nanmax(col))
        if evaluator is not None and len(pts) == len(grid):
            ext = minimize_on_torus(lambda P, j=j: np.array([value_at(p, j) for p in P]), grid,
                                    refine=True, values=col)
            lo, hi = min(lo, ext.min_value), max(hi, ext.max_value)
        bands.append((lo, hi))
        complete.append(bool(not np.any(np.isnan(col))))
        sigma_o.append((lo, min(hi, 0.0)) if lo <= 0.0 else None)
    return GuidedBandSet(points=pts, curves=table, floors=np.array([c.floor for c in curves]),
                         bands=bands, complete_flags=complete, sigma_o=sigma_o,
                         unresolved=[list(c.unresolved) for c in curves],
                         exhausted=any(c.exhausted for c in curves))


def compute_guided_bands(cyl: CylinderModel, Q: GuidedPotential, grid: TorusGrid,
                         policy: ConvergencePolicy | None = None, grid_perp: TorusGrid | None = None,
                         rho: float | None = None, refine: bool = True) -> GuidedBandSet:
    """Guided eigenvalue curves over the whole guided torus, assembled into bands."""
    policy = policy or ConvergencePolicy()
    grid_perp = grid_perp or TorusGrid(cyl.dim_perp, 64)

    def at(theta):
        return guided_eigenvalues(cyl, Q, theta, policy, grid_perp, rho)

    curves = parallel_map(at, grid.points)
    return assemble_guided_bands(curves, grid, at if refine else None)


# ----------------------------------------------------------- modified cylinder

@dataclass
class MuSpectrum:
    mu_tilde: list
    ess_inf_h: float
    mu: list
    unresolved: list = field(default_factory=list)
    exhausted: bool = False


def mu_spectrum(cyl: CylinderModel, Q: GuidedPotential, grid_perp: TorusGrid | None = None,
                policy: ConvergencePolicy | None = None, rho: float | None = None) -> MuSpectrum:
    """Eigenvalues of h = Delta_m + W - Q below its essential spectrum, capped as mu_j."""
    policy = policy or ConvergencePolicy()
    grid_perp = grid_perp or TorusGrid(cyl.dim_perp, 64)

    def lowest(P):
        return _eigvalsh_stack(modified_fibers(cyl, P))[:, 0]

    ess = minimize_on_torus(lowest, grid_perp, refine=True).min_value
    p = Q.support_size if Q is not None else 0
    if p == 0:
        return MuSpectrum([], ess, [])
    highest = float(_eigvalsh_stack(modified_fibers(cyl, grid_perp.points)).max())
    margin = policy.resolved_margin(highest if rho is None else rho)
    r0 = policy.start_radius(Q)
    res = certify_below(lambda R: modified_band(cyl, Q, window_for(cyl, R)), ess - margin, policy,
                        r0, policy.max_radius(cyl.dim_perp, r0))
    _handle(res, policy, "modified cylinder")
    mu_t = sorted(res.values)
    mu = [min(m, ess) for m in mu_t[:p]] + [ess] * max(0, p - len(mu_t))
    return MuSpectrum(mu_t, ess, mu, res.unresolved, res.exhausted)


# --------------------------------------------------------------- gap states

@dataclass
class GapState:
    value: float
    gap: tuple
    drift: float
    heuristic: bool = True


def gap_states(cyl: CylinderModel, Q: GuidedPotential, theta, policy: ConvergencePolicy | None = None,
               grid_perp: TorusGrid | None = None) -> list[GapState]:
    """Window-stable eigenvalues of H(theta) strictly inside gaps of sigma(H0(theta)).

    Heuristic: anything in a gap that moves by more than ``tol_window``
    between windows R0 and 2 R0 is treated as a truncation artifact.
    """
    policy = policy or ConvergencePolicy()
    if Q is None or Q.support_size == 0:
        return []
    grid_perp = grid_perp or TorusGrid(cyl.dim_perp, 64)
    theta = np.asarray(theta, dtype=np.float64).reshape(cyl.dim_guided)
    comps = union_measure(fiber_band_intervals(cyl, theta, grid_perp))[0]
    r0 = policy.start_radius(Q)
    out = []
    for a, b in comps.gaps():
        e1 = banded_eigvals(truncated_band(cyl, Q, theta, window_for(cyl, r0)), upper=b, lower=a)
        e2 = banded_eigvals(truncated_band(cyl, Q, theta, window_for(cyl, 2 * r0)), upper=b, lower=a)
        for lam in e2:
            if not a < lam < b or len(e1) == 0:
                continue
            drift = float(np.min(np.abs(e1 - lam)))
            if drift < policy.tol_window:
                out.append(GapState(float(lam), (a, b), drift))
    return out
