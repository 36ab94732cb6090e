"""Fiber operators of the periodic and guided Schrödinger operators.

Full fibers live on the quotient by the whole lattice (size nu).  Cylinder
fibers live on the cylinder and are truncated to a box window of
perpendicular shifts: out-of-window couplings are dropped while diagonals
keep the infinite-graph degree (Dirichlet truncation).

Window sites are ordered shift-major: ``index = cell(n) * nu + vertex`` with
cells in lexicographic order, so windowed fibers are narrow-banded.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import kernels
from .graph import CylinderModel, GuidedPotential
from .numerics import band_to_dense


class SupportOutsideWindow(ValueError):
    pass


@dataclass(frozen=True)
class Window:
    radius: int
    dim: int
    nu: int

    @property
    def side(self) -> int:
        return 2 * self.radius + 1

    @property
    def n_cells(self) -> int:
        return self.side ** self.dim

    @property
    def size(self) -> int:
        return self.nu * self.n_cells

    @cached_property
    def cells(self) -> np.ndarray:
        axes = np.indices((self.side,) * self.dim).reshape(self.dim, -1).T
        return axes - self.radius

    def contains(self, shift) -> bool:
        return all(abs(int(x)) <= self.radius for x in shift)

    def cell_index(self, shift) -> int:
        c = 0
        for x in shift:
            c = c * self.side + int(x) + self.radius
        return c

    def index(self, vertex: int, shift) -> int:
        return self.cell_index(shift) * self.nu + vertex

    def sites(self):
        """Enumerate ``(vertex, shift)`` in matrix order."""
        for n in self.cells:
            for v in range(self.nu):
                yield v, tuple(int(x) for x in n)


def window_for(cyl: CylinderModel, radius: int) -> Window:
    return Window(int(radius), cyl.dim_perp, cyl.nu)


def _phases(tau: np.ndarray, theta) -> tuple[np.ndarray, np.ndarray]:
    theta = np.asarray(theta, dtype=np.float64)
    ph = tau.astype(np.float64) @ theta.T
    return np.cos(ph), np.sin(ph)


# ----------------------------------------------------------------- full fibers

def full_fibers(cyl: CylinderModel, thetas, include_W: bool = True, bridges: bool = True) -> np.ndarray:
    """Stack of nu x nu fibers of Delta + W at quasimomenta ``thetas`` (M, dim_total).

    With ``bridges=False`` the bridge edges are deleted and degrees reduced,
    giving the Floquet fibers of the modified cylinder operator.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    mask = np.ones(cyl.n_oriented, dtype=bool) if bridges else ~cyl.is_bridge
    deg = cyl.degrees if bridges else cyl.modified_degrees
    base = deg.astype(np.float64) + (cyl.W if include_W else 0.0)
    cosv, sinv = _phases(cyl.tau[mask], thetas)
    return kernels.fiber_batch(cyl.nu, cyl.tails[mask], cyl.heads[mask], cosv.T, sinv.T, base)


def full_fiber(cyl: CylinderModel, theta_full, include_W: bool = True) -> np.ndarray:
    theta_full = np.asarray(theta_full, dtype=np.float64).reshape(1, cyl.dim_total)
    return full_fibers(cyl, theta_full, include_W)[0]


def modified_fibers(cyl: CylinderModel, phis) -> np.ndarray:
    """Floquet fibers (over perpendicular quasimomenta) of Delta_m + W."""
    phis = np.atleast_2d(np.asarray(phis, dtype=np.float64))
    thetas = np.hstack([np.zeros((len(phis), cyl.dim_guided)), phis])
    return full_fibers(cyl, thetas, bridges=False)


# ------------------------------------------------------------ windowed fibers

def _offsets(cyl: CylinderModel, win: Window) -> np.ndarray:
    strides = win.side ** np.arange(win.dim - 1, -1, -1)
    off = cyl.nu * (cyl.tau_perp @ strides) + (cyl.heads - cyl.tails)
    reachable = np.all(np.abs(cyl.tau_perp) <= 2 * win.radius, axis=1)
    return np.where(reachable, off, -1).astype(np.int64)


def bandwidth(cyl: CylinderModel, win: Window, mask=None) -> int:
    off = _offsets(cyl, win)
    if mask is not None:
        off = off[mask]
    return int(max(off.max(initial=0), 0))


def _q_diag(cyl: CylinderModel, Q: GuidedPotential | None, win: Window) -> np.ndarray:
    q = np.zeros(win.size)
    if Q is None:
        return q
    for (v, n), val in zip(Q.sites, Q.values):
        if not win.contains(n):
            raise SupportOutsideWindow(f"Q site {(cyl.vertex_ids[v], n)} outside window radius {win.radius}")
        q[win.index(v, n)] = val
    return q


def _band(cyl, win, mask, theta, base, bw):
    cosv, sinv = _phases(cyl.tau_par[mask], np.asarray(theta, dtype=np.float64).reshape(1, -1))
    return kernels.assemble_band(bw, cyl.nu, win.radius, win.dim, cyl.tails[mask], cyl.heads[mask],
                                 cyl.tau_perp[mask], _offsets(cyl, win)[mask], cosv[:, 0], sinv[:, 0], base)


def modified_band(cyl: CylinderModel, Q, win: Window, include_Q: bool = True, bw: int | None = None):
    mask = ~cyl.is_bridge
    bw = bandwidth(cyl, win) if bw is None else bw
    base = np.tile(cyl.modified_degrees + cyl.W, win.n_cells)
    if include_Q:
        base = base - _q_diag(cyl, Q, win)
    return _band(cyl, win, mask, np.zeros(cyl.dim_guided), base, bw)


def bridge_band(cyl: CylinderModel, theta, win: Window, bw: int | None = None):
    mask = cyl.is_bridge
    bw = bandwidth(cyl, win) if bw is None else bw
    base = np.tile(cyl.bridge_counts.astype(np.float64), win.n_cells)
    return _band(cyl, win, mask, theta, base, bw)


def truncated_band(cyl: CylinderModel, Q, theta, win: Window, include_Q: bool = True):
    """Band storage of H(theta) = h + Delta_b(theta) on the window."""
    bw = bandwidth(cyl, win)
    return modified_band(cyl, Q, win, include_Q, bw) + bridge_band(cyl, theta, win, bw)


def truncated_fiber(cyl, Q, theta, window: Window, include_Q: bool = True) -> np.ndarray:
    return band_to_dense(truncated_band(cyl, Q, theta, window, include_Q))


def modified_truncated_fiber(cyl, Q, window: Window, include_Q: bool = True) -> np.ndarray:
    return band_to_dense(modified_band(cyl, Q, window, include_Q))


def bridge_fiber(cyl, theta, window: Window) -> np.ndarray:
    return band_to_dense(bridge_band(cyl, theta, window))


def cylinder_bloch_fiber(cyl: CylinderModel, theta, phi) -> np.ndarray:
    """nu x nu Floquet fiber of the cylinder operator H0(theta) at perpendicular phi.

    Read off the translation blocks of a windowed cylinder fiber, so it goes
    through the window assembly rather than the full-fiber kernel.
    """
    reach = int(np.abs(cyl.tau_perp).max(initial=0))
    win = window_for(cyl, reach)
    A = truncated_fiber(cyl, None, theta, win, include_Q=False)
    nu = cyl.nu
    r0 = win.cell_index((0,) * win.dim) * nu
    F = np.zeros((nu, nu), dtype=np.complex128)
    phi = np.asarray(phi, dtype=np.float64)
    for c, n in enumerate(win.cells):
        block = A[r0:r0 + nu, c * nu:(c + 1) * nu]
        F += block * np.exp(1j * float(n @ phi))
    return F
