import numpy as np
import pytest

from guided_bands.floquet import full_fiber
from guided_bands.kernels import ConvergenceFailure, householder_ql_eigh
from guided_bands.numerics import (MalformedInterval, TorusGrid, band_to_dense, banded_eigvals, eigh,
                                   minimize_on_torus, parallel_map, union_measure, worker_count)

from conftest import load

rng = np.random.default_rng(20261016)


def random_hermitian(n, rng=rng):
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (X + X.conj().T) / 2


@pytest.mark.parametrize("method", ["lapack", "householder"])
def test_small_examples(method):
    assert np.allclose(eigh(np.zeros((3, 3)), method=method), 0.0)
    assert np.allclose(eigh(np.array([[2.0, -1.0], [-1.0, 2.0]]), method=method), [1.0, 3.0], atol=1e-14)
    _, cyl, _ = load("square.json")
    F = full_fiber(cyl, [np.pi, np.pi], include_W=False)
    assert F.shape == (1, 1)
    assert np.allclose(eigh(F, method=method), [8.0], atol=1e-14)


def test_rejects_empty_and_unknown():
    with pytest.raises(ValueError):
        eigh(np.zeros((0, 0)))
    with pytest.raises(ValueError):
        eigh(np.eye(2), method="jacobi")


@pytest.mark.parametrize("n", [1, 2, 3, 17, 64, 200, 500])
@pytest.mark.parametrize("method", ["lapack", "householder"])
def test_reconstruction_and_residuals(n, method):
    A = random_hermitian(n)
    w, V = eigh(A, want_vectors=True, method=method)
    assert np.all(np.diff(w) >= 0)
    normA = np.linalg.norm(A)
    assert np.linalg.norm(A - (V * w) @ V.conj().T) <= 1e-9 * normA
    assert np.linalg.norm(V.conj().T @ V - np.eye(n)) <= 1e-10 * max(n, 1)
    resid = np.linalg.norm(A @ V - V * w, axis=0)
    assert np.all(resid <= 1e-10 * np.linalg.norm(A, 2))


def test_householder_matches_lapack_and_is_deterministic():
    A = random_hermitian(40)
    w1 = householder_ql_eigh(A)
    w2 = householder_ql_eigh(A)
    assert np.array_equal(w1, w2)
    assert np.max(np.abs(w1 - np.linalg.eigvalsh(A))) < 1e-12


def test_iteration_cap_raises():
    with pytest.raises(ConvergenceFailure):
        householder_ql_eigh(random_hermitian(12), max_iter=0)


def test_weyl_inequality_on_random_pairs():
    local = np.random.default_rng(4)
    for _ in range(100):
        A, B = random_hermitian(8, local), random_hermitian(8, local)
        a, b, s = eigh(A), eigh(B), eigh(A + B)
        assert np.all(a + b[0] <= s + 1e-10)
        assert np.all(s <= a + b[-1] + 1e-10)


def test_band_storage_round_trip():
    n, bw = 30, 4
    A = random_hermitian(n)
    A[np.abs(np.subtract.outer(np.arange(n), np.arange(n))) > bw] = 0
    ab = np.zeros((bw + 1, n), dtype=complex)
    for i in range(n):
        for j in range(i, min(n, i + bw + 1)):
            ab[bw + i - j, j] = A[i, j]
    assert np.array_equal(band_to_dense(ab), A)
    full = np.linalg.eigvalsh(A)
    assert np.allclose(banded_eigvals(ab), full, atol=1e-12)
    cut = full[len(full) // 2]
    sel = banded_eigvals(ab, upper=cut)
    assert np.allclose(sel, full[full <= cut], atol=1e-12)
    assert len(banded_eigvals(ab, upper=full[0] - 1.0)) == 0


def test_torus_grid_contains_zero_and_pi():
    for N in (4, 7, 64):
        g = TorusGrid(1, N)
        assert len(g.points) == N
        assert np.any(g.axis == 0.0)
        assert np.all(g.axis > -np.pi) and np.all(g.axis <= np.pi)
        if N % 2 == 0:
            assert np.any(g.axis == np.pi)
    g = TorusGrid(2, 8)
    assert g.points.shape == (64, 2) and len(g) == 64
    assert np.any(np.all(g.points == 0.0, axis=1))
    assert np.any(np.all(g.points == np.pi, axis=1))


def test_minimize_cosine():
    g = TorusGrid(1, 64)
    ext = minimize_on_torus(lambda P: 4 - 2 * np.cos(P[:, 0]), g)
    assert ext.min_value == pytest.approx(2.0, abs=1e-14) and ext.argmin[0] == 0.0
    assert ext.max_value == pytest.approx(6.0, abs=1e-14) and abs(ext.argmax[0]) == np.pi


def test_minimize_constant_and_separable():
    g = TorusGrid(2, 64)
    ext = minimize_on_torus(lambda P: np.full(len(P), 1.25), g)
    assert ext.min_value == ext.max_value == 1.25
    ext = minimize_on_torus(lambda P: -np.cos(P[:, 0]) - np.cos(P[:, 1]), g)
    assert ext.min_value == pytest.approx(-2.0, abs=1e-14)
    assert np.allclose(ext.argmin, 0.0)


def test_refinement_improves_off_grid_extremum_and_respects_lipschitz_bound():
    g = TorusGrid(1, 16)
    c = 0.1234
    f = lambda P: -np.cos(P[:, 0] - c)
    ext = minimize_on_torus(f, g, refine=True)
    assert ext.min_value <= ext.grid_min
    assert abs(ext.min_value + 1.0) < abs(ext.grid_min + 1.0)
    L, h = 1.0, g.spacing
    assert ext.grid_min - L * h <= ext.min_value and ext.max_value <= ext.grid_max + L * h


def test_minimize_lipschitz_on_fiber_branches():
    _, cyl, _ = load("pendant_flatband.json")
    g = TorusGrid(1, 32)
    L = float(np.abs(cyl.tau_par[cyl.is_bridge]).sum())
    f = lambda P: np.linalg.eigvalsh(np.array([full_fiber(cyl, [p[0], 0.3]) for p in P]))[:, 0]
    ext = minimize_on_torus(f, g)
    h = g.spacing
    assert ext.grid_min - L * h <= ext.min_value <= ext.grid_min
    assert ext.grid_max <= ext.max_value <= ext.grid_max + L * h


def test_union_measure():
    s, m = union_measure([(0, 1), (0.5, 2)])
    assert m == 2 and len(s) == 1
    s, m = union_measure([(0, 1), (2, 3)])
    assert m == 2 and len(s) == 2 and s.gaps() == [(1.0, 2.0)]
    mu = 2 - np.sqrt(13)
    assert union_measure([(mu, mu + 4)])[1] == pytest.approx(4.0, abs=1e-15)
    assert union_measure([(0, 1), (1, 2)])[0].intervals == ((0.0, 2.0),)
    with pytest.raises(MalformedInterval):
        union_measure([(1, 0)])


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("GUIDED_BANDS_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("GUIDED_BANDS_THREADS", "0")
    assert worker_count() >= 1
    assert parallel_map(lambda x: x * x, range(10)) == [x * x for x in range(10)]
