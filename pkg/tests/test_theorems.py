import json

import numpy as np
import pytest

from guided_bands.graph import GuidedPotential, QEntry, build_cylinder, load_and_validate
from guided_bands.numerics import TorusGrid
from guided_bands.spectra import GuidedBandSet, compute_guided_bands, h0_spectrum, mu_spectrum
from guided_bands.theorems import (_ratio_check, asymptotics_probe, bandwidth_sum_check, check_bridge_bound,
                                   check_envelope, delta_jj, delta_profile)

from conftest import ALL_CONFIGS, load

MU1 = 2 - np.sqrt(13)
G1 = TorusGrid(1, 64)


def _run(name, scale=1.0):
    _, cyl, Q = load(name)
    bs = h0_spectrum(cyl, TorusGrid(cyl.dim_total, 64 if cyl.dim_total == 2 else 8))
    cyl = cyl.shifted(bs.shift)
    Q = Q.scaled(scale)
    gb = compute_guided_bands(cyl, Q, G1, grid_perp=G1, rho=bs.rho)
    mu = mu_spectrum(cyl, Q, G1, rho=bs.rho)
    return cyl, Q, bs, gb, mu


def test_envelope_square_q3():
    _, Q, bs, gb, _ = _run("square_q3.json")
    rep = check_envelope(gb, Q, bs.rho)
    assert rep.passed
    band = rep.records[0]
    assert band.claimed == (-3.0, 5.0) and band.status == "strict"
    assert band.computed[0] == pytest.approx(MU1, abs=1e-8) and band.computed[1] == 0.0


def test_envelope_forces_guided_band_when_q_exceeds_rho():
    spec, cyl, _ = load("square.json")
    Q = GuidedPotential.from_spec(spec.with_q([QEntry("v", (0,), 9.0)]))
    gb = compute_guided_bands(cyl, Q, G1, grid_perp=G1, rho=8.0)
    rep = check_envelope(gb, Q, 8.0)
    count = rep.records[-1]
    assert rep.passed and count.status == "count" and count.claimed[0] == 1.0 and gb.n_g >= 1


def test_envelope_trivial_when_nothing_below_zero():
    empty = GuidedBandSet(np.zeros((0, 1)), np.zeros((0, 0)), np.zeros(0), [], [], [], [])
    rep = check_envelope(empty, GuidedPotential(((0, (0,)),), (1.0,)), 8.0)
    assert rep.passed and rep.records[-1].claimed[0] == 0.0


def test_bridge_bound_square_q3_saturates():
    cyl, Q, _, gb, mu = _run("square_q3.json")
    assert cyl.beta_plus == 2
    rep = check_bridge_bound(gb, mu, cyl.beta_plus)
    assert rep.passed
    rec = rep.records[0]
    assert "lower saturated" in rec.status
    assert "full band saturates lower and upper" in rec.notes


def test_bridge_bound_chain_is_strict():
    cyl, Q, _, gb, mu = _run("chain_no_bridge_loops.json", scale=3.0)
    rep = check_bridge_bound(gb, mu, cyl.beta_plus)
    assert rep.passed and rep.records
    for r in rep.records:
        assert r.status == "strict" and r.margin > 1e-6


def test_reports_are_reproducible():
    cyl, Q, bs, gb, mu = _run("square_q3.json")
    a = check_bridge_bound(gb, mu, cyl.beta_plus)
    _, _, _, gb2, mu2 = _run("square_q3.json")
    b = check_bridge_bound(gb2, mu2, cyl.beta_plus)
    assert a == b


def test_delta_square():
    _, cyl, Q = load("square.json")
    th = np.linspace(-np.pi, np.pi, 11)[:, None]
    assert np.allclose(delta_jj(cyl, 0, th), 4 - 2 * np.cos(th[:, 0]), atol=1e-15)
    prof = delta_profile(cyl, Q, G1)
    assert prof.delta_minus == [2.0] and prof.delta_plus == [6.0] and prof.delta == [4.0]
    assert prof.beta_jj == [2] and prof.closed_form_minus == [4]


def test_delta_without_cylinder_loops_is_constant():
    _, cyl, Q = load("chain_no_bridge_loops.json")
    prof = delta_profile(cyl, Q, G1)
    v = Q.sites[0][0]
    assert np.all(prof.table[:, 0] == cyl.degrees[v])
    assert prof.delta == [0.0]


@pytest.mark.parametrize("name", ALL_CONFIGS)
def test_delta_invariants(name):
    _, cyl, Q = load(name)
    prof = delta_profile(cyl, Q, TorusGrid(cyl.dim_guided, 64))
    fine = TorusGrid(cyl.dim_guided, 640)
    for j, (v, _) in enumerate(Q.sites):
        b = prof.beta_jj[j]
        assert delta_jj(cyl, v, np.zeros((1, cyl.dim_guided)))[0] == prof.kappa_v[j] - prof.kappa_jj[j] - b
        if b > 0:
            assert b - 1e-10 <= prof.delta[j] <= 2 * b + 1e-10
        else:
            assert prof.delta[j] == 0.0
        brute = delta_jj(cyl, v, fine.points)
        assert abs(brute.min() - prof.delta_minus[j]) <= 1e-8
        assert abs(brute.max() - prof.delta_plus[j]) <= 1e-8


def test_ratio_rule():
    ts = [50.0, 100.0, 200.0]
    assert _ratio_check(ts, [0.04, 0.02, 0.01])[0]
    assert _ratio_check(ts, [1e-8, -2e-9, 3e-10])[0]
    ok, ratio, note = _ratio_check(ts, [0.04, 0.01, 0.0025])
    assert ok and ratio == pytest.approx(4.0) and "faster" in note
    assert not _ratio_check(ts, [0.04, 0.03, 0.025])[0]
    assert not _ratio_check(ts, [0.01, 0.02, 0.04])[0]
    assert not _ratio_check([50.0, 120.0], [0.04, 0.02])[0]


def test_asymptotics_square():
    _, cyl, Q = load("square.json")
    rep = asymptotics_probe(cyl, Q, [50, 100, 200], G1, grid_perp=G1, rho=8.0)
    assert rep.passed
    for r in rep.records:
        if r.status in ("lambda^-", "lambda^+"):
            # regression bound on the first-order constant at t = 200
            assert abs(r.computed[-1]) <= 0.05
    assert any("differs from kappa_v - kappa_jj" in n for n in rep.notes)
    with pytest.raises(ValueError):
        asymptotics_probe(cyl, Q, [50, 120], G1)


def test_bandwidth_report_square():
    _, cyl, _ = load("square.json")
    rep = bandwidth_sum_check(h0_spectrum(cyl, TorusGrid(2, 64)), cyl)
    assert rep.informational
    once, twice = rep.records
    assert once.computed == (8.0,) and once.claimed == (0.0, 4.0) and "violated" in once.status
    assert twice.claimed == (0.0, 8.0) and "holds" in twice.status
    assert any("convention" in n for n in rep.notes)


def test_bandwidth_ignores_flat_bands():
    _, cyl, _ = load("pendant_flatband.json")
    bs = h0_spectrum(cyl, TorusGrid(2, 64))
    rep = bandwidth_sum_check(bs, cyl)
    expected = sum(b - a for (a, b), f in zip(bs.bands, bs.flat_flags) if not f)
    assert rep.records[0].computed[0] == pytest.approx(expected, abs=1e-15)
    assert any(bs.flat_flags)


def test_checks_on_disconnected_graph_still_compute():
    spec = load_and_validate(json.dumps({
        "dim_total": 2, "dim_guided": 1, "vertices": [{"id": "v"}],
        "edges": [{"from": "v", "to": "v", "index": [2, 0]}, {"from": "v", "to": "v", "index": [0, 1]}],
        "guided_potential": [{"vertex": "v", "shift": [0], "Q": 3.0}]}))
    cyl = build_cylinder(spec)
    gb = compute_guided_bands(cyl, GuidedPotential.from_spec(spec), G1, grid_perp=G1)
    assert gb.count == 1
