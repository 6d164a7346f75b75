import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sramlab.engine import SimConfig
from sramlab.errors import DegenerateLobes, NoUnityGainPoint
from sramlab.snm import (Curve, SnmMode, brute_force_snm, butterfly, butterfly_table,
                         half_cell_vtc, max_square_snm, noise_margins, snm_experiment)
from sramlab.sram import SramCellParams

P = SramCellParams()
VDD = P.vdd


def tanh_vtc(vdd=1.8, trip=0.9, gain=10.0, n=361, floor=0.0):
    x = np.linspace(0.0, vdd, n)
    y = floor + (vdd - floor) * 0.5 * (1 - np.tanh(2 * gain * (x - trip) / vdd))
    return Curve(x, y)


def step_vtc(vdd=1.8, n=3601):
    x = np.linspace(0.0, vdd, n)
    y = np.where(x < vdd / 2, vdd, np.where(x > vdd / 2, 0.0, vdd / 2))
    return Curve(x, y)


@pytest.fixture(scope="module")
def hold_pair():
    return butterfly(P, SnmMode.HOLD)


@pytest.fixture(scope="module")
def read_pair():
    return butterfly(P, SnmMode.READ)


# -- curves -----------------------------------------------------------------

def test_curve_validation():
    with pytest.raises(ValueError):
        Curve([0.0], [1.0])
    with pytest.raises(ValueError):
        Curve([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        Curve([0.0, np.nan], [1.0, 0.0])
    c = Curve([0.0, 1.0], [1.0, 0.0])
    assert c.increasing and not c.mirrored().increasing
    assert "2 points" in repr(c)


# -- noise margins --------------------------------------------------------

def test_noise_margins_steep_curve():
    x = np.linspace(0.0, 1.8, 1801)
    nm = noise_margins(Curve(x, np.where(x < 0.9, 1.8, 0.0)))
    assert nm.v_il == pytest.approx(0.9, abs=2e-3)
    assert nm.v_ih == pytest.approx(0.9, abs=2e-3)
    assert nm.nm_h == pytest.approx(0.9, abs=2e-3)
    assert nm.nm_l == pytest.approx(0.9, abs=2e-3)


def test_noise_margins_definitions():
    nm = noise_margins(tanh_vtc(gain=3.0, trip=0.8))
    assert nm.nm_h == pytest.approx(nm.v_oh - nm.v_ih)
    assert nm.nm_l == pytest.approx(nm.v_il - nm.v_ol)
    assert nm.v_il < nm.v_ih


def test_noise_margins_wire_has_no_unity_gain_point():
    x = np.linspace(0.0, 1.8, 50)
    with pytest.raises(NoUnityGainPoint):
        noise_margins(Curve(x, x))


def test_symmetric_inverter_margins_balance():
    # pull-up matched to pull-down: kp_p (W/L)_p == kp_n (W/L)_n
    p = replace(P, load_wl=P.driver_wl * P.nmos.kp / P.pmos.kp)
    nm = noise_margins(half_cell_vtc(p, SnmMode.HOLD, "A", step=2e-3))
    assert nm.nm_h == pytest.approx(nm.nm_l, rel=0.02)


# -- max square -------------------------------------------------------------

def test_ideal_steps_give_half_supply():
    c = step_vtc()
    res = max_square_snm(c, c.mirrored())
    step = 1.8 / 3600
    assert res.snm == pytest.approx(0.9, abs=2 * step)
    assert res.snm_lobe_high == pytest.approx(0.9, abs=2 * step)
    assert res.snm_lobe_low == pytest.approx(0.9, abs=2 * step)


def test_identity_lines_have_no_lobes():
    x = np.linspace(0.0, 1.8, 100)
    c = Curve(x, x)
    res = max_square_snm(c, c)
    assert res.snm == 0.0 and res.diagnostic
    with pytest.raises(DegenerateLobes):
        max_square_snm(c, c, strict=True)


def test_single_lobe_is_degenerate():
    # one inverter dominates: the curves cross once, leaving one lobe
    a = tanh_vtc(trip=0.3, gain=3.0)
    b = tanh_vtc(trip=1.5, gain=3.0).mirrored()
    res = max_square_snm(a, b)
    assert res.snm == 0.0
    assert "fewer than two" in res.diagnostic


def test_result_invariants(hold_pair):
    res = max_square_snm(*hold_pair)
    assert 0 <= res.snm <= min(res.snm_lobe_high, res.snm_lobe_low)
    assert set(res.anchors) == {"high", "low"}
    for sq in res.anchors.values():
        # the anchor square lies between the two curves in its lobe
        assert 0 <= sq.x <= VDD and 0 <= sq.y <= VDD
        assert sq.x + sq.side <= VDD + 1e-9 and sq.y + sq.side <= VDD + 1e-9


def test_anchor_corners_touch_both_curves(hold_pair):
    c1, c2m = hold_pair
    res = max_square_snm(c1, c2m)
    f2 = c2m.mirrored()
    for key, sq in res.anchors.items():
        corners = np.array(sq.corners)
        d1 = min(abs(c1(x) - y) for x, y in corners)
        d2 = min(abs(f2(y) - x) for x, y in corners)
        assert d1 < 5e-3 and d2 < 5e-3, key


SYNTHETIC = {
    "tanh-10": (tanh_vtc(), tanh_vtc().mirrored()),
    "tanh-4": (tanh_vtc(gain=4.0), tanh_vtc(gain=4.0).mirrored()),
    "asymmetric": (tanh_vtc(trip=0.7, gain=8.0), tanh_vtc(trip=1.0, gain=5.0).mirrored()),
    "lifted-floor": (tanh_vtc(gain=6.0, floor=0.2), tanh_vtc(gain=6.0, floor=0.2).mirrored()),
    "low-supply": (tanh_vtc(vdd=0.9, trip=0.45, gain=5.0),
                   tanh_vtc(vdd=0.9, trip=0.45, gain=5.0).mirrored()),
}


@pytest.mark.parametrize("name", sorted(SYNTHETIC))
def test_oracle_equivalence_synthetic(name):
    c1, c2m = SYNTHETIC[name]
    fast = max_square_snm(c1, c2m)
    snm, high, low = brute_force_snm(c1, c2m, grid=5e-3)
    assert fast.snm == pytest.approx(snm, abs=2 * 5e-3)
    assert fast.snm_lobe_high == pytest.approx(high, abs=2 * 5e-3)
    assert fast.snm_lobe_low == pytest.approx(low, abs=2 * 5e-3)


@pytest.mark.parametrize("mode", ["hold", "read"])
def test_oracle_equivalence_simulated(mode, hold_pair, read_pair):
    c1, c2m = hold_pair if mode == "hold" else read_pair
    fast = max_square_snm(c1, c2m)
    snm, _, _ = brute_force_snm(c1, c2m)
    assert fast.snm == pytest.approx(snm, abs=2 * 5e-3)


def test_brute_force_refines_toward_fast_result():
    c1, c2m = SYNTHETIC["asymmetric"]
    fast = max_square_snm(c1, c2m).snm
    coarse = abs(brute_force_snm(c1, c2m, grid=10e-3)[0] - fast)
    fine = abs(brute_force_snm(c1, c2m, grid=2.5e-3)[0] - fast)
    assert fine <= coarse + 1e-12 and fine < 5e-3


@pytest.mark.parametrize("name", sorted(SYNTHETIC))
def test_mirror_swap_invariance(name):
    c1, c2m = SYNTHETIC[name]
    a = max_square_snm(c1, c2m)
    b = max_square_snm(c2m.mirrored(), c1.mirrored())
    assert b.snm == pytest.approx(a.snm, abs=1e-12)
    assert {round(a.snm_lobe_high, 12), round(a.snm_lobe_low, 12)} == \
        {round(b.snm_lobe_high, 12), round(b.snm_lobe_low, 12)}


@settings(max_examples=30, deadline=None)
@given(k=st.floats(0.05, 20.0), gain=st.floats(2.0, 15.0), trip=st.floats(0.7, 1.1))
def test_scaling_covariance(k, gain, trip):
    c1 = tanh_vtc(trip=trip, gain=gain)
    c2m = tanh_vtc(trip=1.8 - trip, gain=gain).mirrored()
    base = max_square_snm(c1, c2m)
    scaled = max_square_snm(c1.scaled(k), c2m.scaled(k))
    assert scaled.snm == pytest.approx(k * base.snm, rel=1e-9, abs=1e-15)


def test_symmetric_cell_lobes_match(hold_pair, read_pair):
    for pair in (hold_pair, read_pair):
        res = max_square_snm(*pair)
        assert abs(res.snm_lobe_high - res.snm_lobe_low) <= 0.02 * res.snm


# -- half-cell curves ------------------------------------------------------

def test_hold_vtc_endpoints_and_monotone():
    cfg = SimConfig()
    c = half_cell_vtc(P, SnmMode.HOLD, "A", cfg)
    assert c.y[0] == pytest.approx(VDD, abs=cfg.vntol)
    assert c.y[-1] == pytest.approx(0.0, abs=cfg.vntol)
    assert np.all(np.diff(c.y) <= 10 * cfg.vntol)


def test_read_vtc_low_plateau_lifted():
    hold = half_cell_vtc(P, SnmMode.HOLD, "A")
    read = half_cell_vtc(P, SnmMode.READ, "A")
    assert read.y[-1] > 0.05
    assert hold.y[-1] < 1e-3


@pytest.mark.parametrize("mode", ["hold", "read"])
def test_vtc_sweep_direction(mode):
    cfg = SimConfig()
    fwd = half_cell_vtc(P, mode, "B", cfg)
    rev = half_cell_vtc(P, mode, "B", cfg, reverse=True)
    assert np.allclose(fwd.x, rev.x)
    assert np.max(np.abs(fwd.y - rev.y)) <= 10 * cfg.vntol


def test_read_snm_below_hold_snm(hold_pair, read_pair):
    assert max_square_snm(*read_pair).snm < max_square_snm(*hold_pair).snm


def test_snm_falls_with_supply():
    values = [snm_experiment(P, SnmMode.HOLD, v).snm for v in (VDD, 0.75 * VDD, 0.5 * VDD)]
    assert values[0] > values[1] > values[2] > 0


def test_snm_experiment_same_level_is_identical():
    a = snm_experiment(P, SnmMode.HOLD, VDD)
    b = snm_experiment(P, SnmMode.HOLD, VDD)
    assert a == b
    assert snm_experiment(P, SnmMode.HOLD) == a
    assert a.supply == VDD and a.mode == "hold"


def test_snm_experiment_rejects_bad_sample():
    with pytest.raises(ValueError):
        snm_experiment(P, SnmMode.HOLD, 0.0)
    with pytest.raises(ValueError):
        snm_experiment(P, SnmMode.HOLD, 2 * VDD)


def test_low_cell_ratio_degrades_read_snm():
    values = [snm_experiment(P.with_cell_ratio(r), SnmMode.READ).snm for r in (2.0, 1.0, 0.5)]
    assert values[0] > values[1] > values[2]


def test_butterfly_table_and_json(hold_pair):
    res = snm_experiment(P, SnmMode.HOLD)
    table = butterfly_table(res)
    assert table.shape == (len(res.curve_fwd), 3)
    assert np.array_equal(table[:, 0], res.curve_fwd.x)
    d = json.loads(json.dumps(res.to_dict()))
    assert set(d["anchors"]) == {"high", "low"}
    assert len(d["anchors"]["high"]) == 4
    assert math.isclose(d["snm"], res.snm)
