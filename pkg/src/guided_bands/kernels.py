"""Hot inner loops: fiber-matrix assembly and the dense Hermitian eigensolver.

Every kernel exists twice: an explicit-loop version compiled with numba and a
vectorised numpy version.  ``GUIDED_BANDS_NUMBA=0`` selects the numpy path
(it is also used when numba is not importable).  Phases are evaluated by the
callers with numpy and passed in as cos/sin arrays, so both paths perform
the same floating-point operations in the same order and agree bit for bit.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("GUIDED_BANDS_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


def _jit(fn):
    if not HAS_NUMBA:
        return fn
    return numba.njit(cache=True)(fn)


# ---------------------------------------------------------------- window band

def _assemble_band_loops(ab, bw, nu, R, k, tails, heads, tau_perp, offsets, cosv, sinv, base):
    n = ab.shape[1]
    side = 2 * R + 1
    ncells = n // nu
    for i in range(n):
        ab[bw, i] += base[i]
    for e in range(len(tails)):
        off = offsets[e]
        if off < 0 or off > bw:
            continue
        u = tails[e]
        val = complex(cosv[e], sinv[e])
        for c in range(ncells):
            rem = c
            inside = True
            for ax in range(k - 1, -1, -1):
                coord = rem % side - R
                rem //= side
                t = coord + tau_perp[e, ax]
                if t < -R or t > R:
                    inside = False
                    break
            if not inside:
                continue
            row = c * nu + u
            if off == 0:
                ab[bw, row] -= cosv[e]
            else:
                ab[bw - off, row + off] -= val


_assemble_band_numba = _jit(_assemble_band_loops)


def _window_cells(R, k):
    side = 2 * R + 1
    axes = np.indices((side,) * k).reshape(k, -1).T
    return axes - R


def _assemble_band_numpy(ab, bw, nu, R, k, tails, heads, tau_perp, offsets, cosv, sinv, base):
    ab[bw, :] += base
    cells = _window_cells(R, k)
    cidx = np.arange(len(cells))
    for e in range(len(tails)):
        off = offsets[e]
        if off < 0 or off > bw:
            continue
        inside = np.all(np.abs(cells + tau_perp[e]) <= R, axis=1)
        rows = cidx[inside] * nu + tails[e]
        if off == 0:
            ab[bw, rows] -= cosv[e]
        else:
            ab[bw - off, rows + off] -= complex(cosv[e], sinv[e])


def assemble_band(bw, nu, R, k, tails, heads, tau_perp, offsets, cosv, sinv, base, use_numba=None):
    """Upper band storage ``ab[bw + i - j, j] = A[i, j]`` of a windowed fiber.

    Only oriented edges with ``0 <= offsets[e] <= bw`` are accumulated; edges
    with negative offset are the conjugate partners of stored ones.
    """
    n = len(base)
    ab = np.zeros((bw + 1, n), dtype=np.complex128)
    args = (ab, int(bw), int(nu), int(R), int(k),
            np.ascontiguousarray(tails, dtype=np.int64), np.ascontiguousarray(heads, dtype=np.int64),
            np.ascontiguousarray(tau_perp, dtype=np.int64).reshape(len(tails), k),
            np.ascontiguousarray(offsets, dtype=np.int64),
            np.ascontiguousarray(cosv, dtype=np.float64), np.ascontiguousarray(sinv, dtype=np.float64),
            np.ascontiguousarray(base, dtype=np.float64))
    if (USE_NUMBA if use_numba is None else use_numba) and HAS_NUMBA:
        _assemble_band_numba(*args)
    else:
        _assemble_band_numpy(*args)
    return ab


# ------------------------------------------------------------- batched fibers

def _fiber_batch_loops(out, tails, heads, cosv, sinv, base):
    M, nu = out.shape[0], out.shape[1]
    for m in range(M):
        for u in range(nu):
            out[m, u, u] += base[u]
    for e in range(len(tails)):
        u, v = tails[e], heads[e]
        if u > v:
            continue
        for m in range(M):
            if u == v:
                out[m, u, u] -= cosv[m, e]
            else:
                out[m, u, v] -= complex(cosv[m, e], sinv[m, e])
    for m in range(M):
        for u in range(nu):
            for v in range(u + 1, nu):
                out[m, v, u] = np.conj(out[m, u, v])


_fiber_batch_numba = _jit(_fiber_batch_loops)


def _fiber_batch_numpy(out, tails, heads, cosv, sinv, base):
    nu = out.shape[1]
    diag = np.arange(nu)
    out[:, diag, diag] += base
    for e in range(len(tails)):
        u, v = tails[e], heads[e]
        if u > v:
            continue
        if u == v:
            out[:, u, u] -= cosv[:, e]
        else:
            out[:, u, v] -= cosv[:, e] + 1j * sinv[:, e]
    iu, ju = np.triu_indices(nu, 1)
    out[:, ju, iu] = np.conj(out[:, iu, ju])


def fiber_batch(nu, tails, heads, cosv, sinv, base, use_numba=None):
    """Stack of ``nu x nu`` fibers, one per row of the (M, E) phase arrays."""
    M = cosv.shape[0]
    out = np.zeros((M, nu, nu), dtype=np.complex128)
    args = (out, np.ascontiguousarray(tails, dtype=np.int64), np.ascontiguousarray(heads, dtype=np.int64),
            np.ascontiguousarray(cosv, dtype=np.float64), np.ascontiguousarray(sinv, dtype=np.float64),
            np.ascontiguousarray(base, dtype=np.float64))
    if (USE_NUMBA if use_numba is None else use_numba) and HAS_NUMBA:
        _fiber_batch_numba(*args)
    else:
        _fiber_batch_numpy(*args)
    return out


# ------------------------------------------------- Householder + implicit QL

class ConvergenceFailure(RuntimeError):
    pass


def _householder_loops(A, Qm):
    """Reduce Hermitian A (in place) to tridiagonal form; Qm accumulates reflectors."""
    n = A.shape[0]
    for k in range(n - 2):
        m = n - k - 1
        x = A[k + 1:, k].copy()
        norm = 0.0
        for i in range(m):
            norm += x[i].real * x[i].real + x[i].imag * x[i].imag
        norm = np.sqrt(norm)
        if norm == 0.0:
            continue
        a0 = abs(x[0])
        phase = x[0] / a0 if a0 > 0.0 else 1.0 + 0.0j
        alpha = -phase * norm
        v = x.copy()
        v[0] -= alpha
        vn = 0.0
        for i in range(m):
            vn += v[i].real * v[i].real + v[i].imag * v[i].imag
        vn = np.sqrt(vn)
        if vn == 0.0:
            continue
        for i in range(m):
            v[i] /= vn
        sub = A[k + 1:, k + 1:]
        p = np.zeros(m, dtype=np.complex128)
        for i in range(m):
            s = 0.0j
            for j in range(m):
                s += sub[i, j] * v[j]
            p[i] = s
        K = 0.0
        for i in range(m):
            K += (np.conj(v[i]) * p[i]).real
        w = p - K * v
        for i in range(m):
            for j in range(m):
                sub[i, j] -= 2.0 * (v[i] * np.conj(w[j]) + w[i] * np.conj(v[j]))
        A[k + 1, k] = alpha
        A[k, k + 1] = np.conj(alpha)
        for i in range(k + 2, n):
            A[i, k] = 0.0
            A[k, i] = 0.0
        for r in range(n):
            s = 0.0j
            for j in range(m):
                s += Qm[r, k + 1 + j] * v[j]
            for j in range(m):
                Qm[r, k + 1 + j] -= 2.0 * s * np.conj(v[j])


def _householder_numpy(A, Qm):
    n = A.shape[0]
    for k in range(n - 2):
        x = A[k + 1:, k].copy()
        norm = np.linalg.norm(x)
        if norm == 0.0:
            continue
        a0 = abs(x[0])
        alpha = -(x[0] / a0 if a0 > 0.0 else 1.0) * norm
        v = x.copy()
        v[0] -= alpha
        vn = np.linalg.norm(v)
        if vn == 0.0:
            continue
        v /= vn
        sub = A[k + 1:, k + 1:]
        p = sub @ v
        K = np.vdot(v, p).real
        w = p - K * v
        sub -= 2.0 * (np.outer(v, w.conj()) + np.outer(w, v.conj()))
        A[k + 1, k] = alpha
        A[k, k + 1] = np.conj(alpha)
        A[k + 2:, k] = 0.0
        A[k, k + 2:] = 0.0
        s = Qm[:, k + 1:] @ v
        Qm[:, k + 1:] -= 2.0 * np.outer(s, v.conj())


def _tql_loops(d, e, Z, want_vectors, max_iter):
    """Implicit-shift QL on a real symmetric tridiagonal (d, e[:n-1]); e[n-1] = 0."""
    n = len(d)
    eps = np.finfo(np.float64).eps
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                return False
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0.0 else -r))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = np.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if want_vectors:
                    for q in range(Z.shape[0]):
                        f = Z[q, i + 1]
                        Z[q, i + 1] = s * Z[q, i] + c * f
                        Z[q, i] = c * Z[q, i] - s * f
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return True


def _tql_numpy(d, e, Z, want_vectors, max_iter):
    n = len(d)
    eps = np.finfo(np.float64).eps
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1 and abs(e[m]) > eps * (abs(d[m]) + abs(d[m + 1])):
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                return False
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0.0 else -r))
            s = c = 1.0
            p = 0.0
            underflow = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = np.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if want_vectors:
                    zi1 = Z[:, i + 1].copy()
                    Z[:, i + 1] = s * Z[:, i] + c * zi1
                    Z[:, i] = c * Z[:, i] - s * zi1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return True


_householder_numba = _jit(_householder_loops)
_tql_numba = _jit(_tql_loops)


def householder_ql_eigh(A, want_vectors=False, use_numba=None, max_iter=60):
    """Eigen-decomposition of a Hermitian matrix by unitary tridiagonal reduction.

    The complex tridiagonal form is rotated by a diagonal unitary to a real
    symmetric one, which is diagonalised by implicit-shift QL.
    """
    jit = (USE_NUMBA if use_numba is None else use_numba) and HAS_NUMBA
    A = np.array(A, dtype=np.complex128, copy=True)
    n = A.shape[0]
    Qm = np.eye(n, dtype=np.complex128)
    if n > 2:
        (_householder_numba if jit else _householder_numpy)(A, Qm)
    d = np.ascontiguousarray(np.real(np.diag(A)).copy())
    sub = np.array([A[i + 1, i] for i in range(n - 1)], dtype=np.complex128)
    phases = np.ones(n, dtype=np.complex128)
    e = np.zeros(n, dtype=np.float64)
    for i in range(n - 1):
        a = abs(sub[i])
        e[i] = a
        phases[i + 1] = phases[i] * (sub[i] / a) if a > 0.0 else phases[i]
    Z = np.eye(n, dtype=np.float64) if want_vectors else np.zeros((0, n), dtype=np.float64)
    ok = (_tql_numba if jit else _tql_numpy)(d, e, Z, bool(want_vectors), int(max_iter))
    if not ok:
        raise ConvergenceFailure(f"implicit QL did not converge within {max_iter} sweeps per eigenvalue")
    order = np.argsort(d, kind="stable")
    w = d[order]
    if not want_vectors:
        return w
    V = (Qm * phases[None, :]) @ Z[:, order]
    return w, V
