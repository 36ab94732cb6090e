import zlib
from dataclasses import replace

import numpy as np
import pytest

from guided_bands.floquet import (SupportOutsideWindow, Window, bridge_fiber, cylinder_bloch_fiber, full_fiber,
                                  modified_truncated_fiber, truncated_fiber, window_for)
from guided_bands.graph import GuidedPotential

from conftest import ALL_CONFIGS, CONFIGS, load
from oracle import raw_graph, strip_box_matrix

# cubic_weak has three perpendicular dimensions; small windows keep it desk-sized
RADII = {"cubic_weak.json": (0, 1, 2)}


def _radii(name):
    return RADII.get(name, (0, 1, 3, 6))


def test_window_enumeration():
    w = Window(1, 2, 2)
    assert w.size == 2 * 9 and w.n_cells == 9
    sites = list(w.sites())
    assert sites[0] == (0, (-1, -1)) and sites[1] == (1, (-1, -1)) and sites[2] == (0, (-1, 0))
    for i, (v, n) in enumerate(sites):
        assert w.index(v, n) == i
    assert w.contains((1, -1)) and not w.contains((2, 0))


def test_square_full_fiber_formula():
    _, cyl, _ = load("square.json")
    assert full_fiber(cyl, [0.0, 0.0])[0, 0] == 0.0
    for t1, t2 in np.random.default_rng(0).uniform(-np.pi, np.pi, size=(10, 2)):
        assert full_fiber(cyl, [t1, t2])[0, 0].real == pytest.approx(4 - 2 * np.cos(t1) - 2 * np.cos(t2), abs=1e-14)


def test_pendant_full_fiber_has_flat_value():
    _, cyl, _ = load("pendant_flatband.json")
    for th in np.random.default_rng(1).uniform(-np.pi, np.pi, size=(10, 2)):
        w = np.linalg.eigvalsh(full_fiber(cyl, th))
        assert np.min(np.abs(w - 1.0)) < 1e-12


def test_square_truncated_fiber_is_jacobi_plus_offset():
    _, cyl, Q = load("square_q3.json")
    R, th = 7, 0.9
    n = 2 * R + 1
    J = 2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    J[R, R] -= 3.0
    A = truncated_fiber(cyl, Q, [th], window_for(cyl, R))
    assert np.allclose(A, (2 - 2 * np.cos(th)) * np.eye(n) + J, atol=1e-15, rtol=0)
    M = modified_truncated_fiber(cyl, Q, window_for(cyl, R))
    assert np.allclose(M, J, atol=1e-15, rtol=0)
    B = bridge_fiber(cyl, [th], window_for(cyl, R))
    assert np.allclose(B, (2 - 2 * np.cos(th)) * np.eye(n), atol=1e-15, rtol=0)


def test_smallest_window():
    _, cyl, Q = load("square_q3.json")
    A = truncated_fiber(cyl, Q, [0.4], window_for(cyl, 0))
    assert A.shape == (1, 1) and A[0, 0].real == pytest.approx(4 - 2 * np.cos(0.4) - 3.0, abs=1e-15)


def test_support_outside_window():
    _, cyl, Q = load("big_measure.json")
    with pytest.raises(SupportOutsideWindow):
        truncated_fiber(cyl, Q, [0.0], window_for(cyl, 3))


@pytest.mark.parametrize("name", ALL_CONFIGS)
def test_decomposition_identity_bit_exact(name):
    _, cyl, Q = load(name)
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    need = Q.max_shift
    for _ in range(16):
        theta = rng.uniform(-np.pi, np.pi, size=cyl.dim_guided)
        R = int(rng.integers(need, need + 3 if cyl.dim_perp > 2 else need + 9))
        win = window_for(cyl, R)
        H = truncated_fiber(cyl, Q, theta, win)
        h = modified_truncated_fiber(cyl, Q, win)
        B = bridge_fiber(cyl, theta, win)
        assert np.array_equal(H, h + B)


@pytest.mark.parametrize("name", ALL_CONFIGS)
def test_bridge_spectrum_within_zero_two_beta(name):
    _, cyl, _ = load(name)
    for R in _radii(name):
        for th in np.random.default_rng(R).uniform(-np.pi, np.pi, size=(4, cyl.dim_guided)):
            w = np.linalg.eigvalsh(bridge_fiber(cyl, th, window_for(cyl, R)))
            assert w[0] >= -1e-10 and w[-1] <= 2 * cyl.beta_plus + 1e-10


def test_bridge_kernel_when_bridges_stay_in_cell():
    _, cyl, _ = load("square.json")
    w = np.linalg.eigvalsh(bridge_fiber(cyl, [0.0], window_for(cyl, 4)))
    assert abs(w[0]) < 1e-14


@pytest.mark.parametrize("name", ALL_CONFIGS)
def test_two_floquet_levels_agree(name):
    _, cyl, _ = load(name)
    rng = np.random.default_rng(7)
    for _ in range(16):
        theta = rng.uniform(-np.pi, np.pi, size=cyl.dim_guided)
        phi = rng.uniform(-np.pi, np.pi, size=cyl.dim_perp)
        a = np.linalg.eigvalsh(full_fiber(cyl, np.concatenate([theta, phi])))
        b = np.linalg.eigvalsh(cylinder_bloch_fiber(cyl, theta, phi))
        assert np.max(np.abs(a - b)) <= 1e-12


@pytest.mark.parametrize("name", ALL_CONFIGS)
def test_laplacian_fibers_are_positive(name):
    _, cyl, _ = load(name)
    rng = np.random.default_rng(11)
    for th in rng.uniform(-np.pi, np.pi, size=(8, cyl.dim_total)):
        assert np.linalg.eigvalsh(full_fiber(cyl, th, include_W=False))[0] >= -1e-10
    zero = cyl.shifted(cyl.W)  # W = 0
    for R in _radii(name)[:3]:
        win = window_for(zero, R)
        for th in rng.uniform(-np.pi, np.pi, size=(3, cyl.dim_guided)):
            for M in (truncated_fiber(zero, None, th, win, include_Q=False),
                      modified_truncated_fiber(zero, None, win, include_Q=False), bridge_fiber(zero, th, win)):
                assert np.array_equal(M, M.conj().T)
                assert np.linalg.eigvalsh(M)[0] >= -1e-10


def test_no_bridge_graph_modified_equals_cylinder_at_zero():
    _, cyl, _ = load("square.json")
    # drop the guided loop: what is left has no bridges at all
    keep = ~cyl.is_bridge
    nb = replace(cyl, tails=cyl.tails[keep], heads=cyl.heads[keep], tau_par=cyl.tau_par[keep],
                 tau_perp=cyl.tau_perp[keep], is_bridge=cyl.is_bridge[keep],
                 degrees=cyl.degrees - cyl.bridge_counts, bridge_counts=0 * cyl.bridge_counts)
    Q = GuidedPotential(((0, (0,)),), (1.0,))
    win = window_for(nb, 5)
    assert np.array_equal(truncated_fiber(nb, Q, [0.0], win), modified_truncated_fiber(nb, Q, win))


@pytest.mark.parametrize("name", ALL_CONFIGS)
def test_window_assembly_matches_brute_force(name):
    _, cyl, Q = load(name)
    doc = raw_graph(CONFIGS / name)
    R = max(Q.max_shift, 1 if cyl.dim_perp > 2 else 3)
    for th in np.random.default_rng(3).uniform(-np.pi, np.pi, size=(3, cyl.dim_guided)):
        A = truncated_fiber(cyl, Q, th, window_for(cyl, R))
        B = strip_box_matrix(doc, th, R)
        assert np.max(np.abs(A - B)) < 1e-14
