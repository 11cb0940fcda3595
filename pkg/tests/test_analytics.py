import csv
import math
import time
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from b2uh.analytics import (
    CSV_COLUMNS,
    UndefinedChange,
    b2uh_success,
    complexity_rows,
    crossover,
    event_a_probability,
    expanded_capacity,
    expansion_change,
    fog_success,
    improvement,
    log_b2uh_success,
    log_binom_cdf,
    min_complexity,
    monte_carlo_b2uh,
    scalability,
    scalability_exponent,
    single_layer_success,
    success_change,
    success_rows,
    suggested_pair,
    write_csv,
)
from b2uh.grouping import optimal_group_sizes


# --- exact rational oracles ------------------------------------------------------


def exact_single(Z, p):
    p = Fraction(p)
    return sum(math.comb(Z, i) * p**i * (1 - p) ** (Z - i) for i in range(Z // 3 + 1))


def exact_b2uh(x, y, p):
    # j failed fogs, then k faulty heads among the surviving x - j; j + k <= x // 3
    p = Fraction(p)
    p1 = exact_single(y, p)
    total = Fraction(0)
    budget = x // 3
    for j in range(budget + 1):
        pa = math.comb(x, j) * (1 - p1) ** j * p1 ** (x - j)
        pk = sum(math.comb(x - j, k) * p**k * (1 - p) ** (x - j - k) for k in range(budget - j + 1))
        total += pa * pk
    return total


def exact_b2uh_enumerated(x, y, p):
    # enumerate every (failed fog set, faulty head set) pattern; tiny x only
    p = Fraction(p)
    p_fog_fail = 1 - exact_single(y, p)
    total = Fraction(0)
    for fog_mask in range(1 << x):
        failed = bin(fog_mask).count("1")
        w_fogs = p_fog_fail**failed * (1 - p_fog_fail) ** (x - failed)
        alive = [i for i in range(x) if not fog_mask >> i & 1]
        for head_mask in range(1 << len(alive)):
            bad = bin(head_mask).count("1")
            if failed + bad <= x // 3:
                total += w_fogs * p**bad * (1 - p) ** (len(alive) - bad)
    return total


PFS = ["0", "1/20", "1/10", "1/5", "3/10", "2/5", "1/2", "7/10", "9/10", "1"]


@pytest.mark.parametrize("Z", [4, 5, 7, 12, 20, 33, 60])
@pytest.mark.parametrize("pf", PFS)
def test_single_layer_matches_exact(Z, pf):
    assert single_layer_success(Z, float(Fraction(pf))) == pytest.approx(float(exact_single(Z, pf)), rel=1e-9, abs=1e-15)


@pytest.mark.parametrize("x,y", [(4, 4), (5, 4), (4, 6), (7, 5), (12, 4)])
@pytest.mark.parametrize("pf", PFS)
def test_b2uh_matches_exact(x, y, pf):
    p = float(Fraction(pf))
    assert b2uh_success(x, y, p) == pytest.approx(float(exact_b2uh(x, y, pf)), rel=1e-9, abs=1e-15)


@pytest.mark.parametrize("x,y", [(4, 4), (5, 5), (6, 4)])
def test_b2uh_matches_pattern_enumeration(x, y):
    for pf in ("1/10", "1/4", "1/2"):
        assert b2uh_success(x, y, float(Fraction(pf))) == pytest.approx(float(exact_b2uh_enumerated(x, y, pf)), rel=1e-9)


def test_hand_values():
    assert single_layer_success(4, 0.5) == pytest.approx(0.3125)
    assert fog_success(4, 0.5) == pytest.approx(0.3125)
    assert single_layer_success(60, 0.0) == 1.0
    assert single_layer_success(60, 1.0) == 0.0
    assert b2uh_success(12, 4, 0.0) == 1.0
    assert b2uh_success(12, 4, 1.0) == 0.0
    assert b2uh_success(12, 4, 0.2) == pytest.approx(float(exact_b2uh(12, 4, "1/5")))


def test_fog_success_equals_single_layer():
    for y in range(4, 30):
        for p in (0.1, 0.33, 0.6):
            assert fog_success(y, p) == single_layer_success(y, p)


@pytest.mark.parametrize("bad", [-0.1, 1.2])
def test_pf_range_checked(bad):
    with pytest.raises(ValueError):
        single_layer_success(10, bad)
    with pytest.raises(ValueError):
        b2uh_success(12, 4, bad)


def test_small_committees_rejected():
    with pytest.raises(ValueError):
        single_layer_success(3, 0.1)
    with pytest.raises(ValueError):
        b2uh_success(3, 4, 0.1)


def test_log_cdf_edges():
    assert log_binom_cdf(10, -1, 0.3) == -math.inf
    assert log_binom_cdf(10, 10, 0.3) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(4, 40), st.integers(4, 25), st.floats(0.0, 1.0))
def test_bounds_and_event_a(x, y, p):
    s = b2uh_success(x, y, p)
    assert 0.0 <= s <= 1.0
    assert s <= event_a_probability(x, y, p) + 1e-12


def test_monotone_decreasing_in_pf():
    grid = np.linspace(0, 1, 81)
    for Z in (60, 360, 1092):
        x, y, _ = optimal_group_sizes(Z)
        s1 = [single_layer_success(Z, p) for p in grid]
        s2 = [b2uh_success(x, y, p) for p in grid]
        assert all(a >= b - 1e-15 for a, b in zip(s1, s1[1:]))
        assert all(a >= b - 1e-15 for a, b in zip(s2, s2[1:]))


def test_large_z_stays_finite():
    for Z in (20000, 60000):
        lp = math.log(single_layer_success(Z, 0.3)) if single_layer_success(Z, 0.3) > 0 else None
        assert lp is None or math.isfinite(lp)
    assert math.isfinite(log_b2uh_success(200, 19, 0.9))


# --- relative change -------------------------------------------------------------


def test_success_change_examples():
    assert success_change(0.4, 0.4) == 0.0
    assert success_change(0.8, 0.4) == pytest.approx(1.0)
    with pytest.raises(UndefinedChange):
        success_change(0.1, 0.0)


def test_improvement_matches_direct_ratio_when_representable():
    for Z, p in [(360, 0.2), (660, 0.3), (1092, 0.1)]:
        x, y, _ = optimal_group_sizes(Z)
        direct = success_change(b2uh_success(x, y, p), single_layer_success(Z, p))
        assert improvement(Z, p) == pytest.approx(direct, rel=1e-9, abs=1e-12)


def test_improvement_at_045_is_negative_for_360():
    # frozen oracle: the flat committee still wins by many orders of magnitude
    assert improvement(360, 0.45) == pytest.approx(-1.0, abs=1e-6)


@pytest.mark.parametrize("Z,expected", [(360, 0.86512), (660, 0.71202), (1092, 0.59924)])
def test_frozen_crossovers(Z, expected):
    t0 = time.perf_counter()
    c = crossover(Z)
    assert time.perf_counter() - t0 < 10
    assert c == pytest.approx(expected, abs=1e-4)
    assert improvement(Z, c - 1e-3) < 0 < improvement(Z, c + 1e-3)


def test_crossover_none_when_no_sign_change():
    assert crossover(360, 0.0, 0.5) is None


# --- complexity and scalability --------------------------------------------------


def test_min_complexity():
    assert min_complexity(360) == pytest.approx(1.89 * 360 ** (4 / 3))
    assert 4160 < min_complexity(360)
    with pytest.raises(ValueError):
        min_complexity(0)
    zs = np.arange(1, 5000, 37)
    vals = [min_complexity(z) for z in zs]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_scalability_360():
    s = scalability(360)
    assert s.z_expanded == pytest.approx((360**2 / 1.89) ** 0.75)
    assert abs(4265 - s.z_expanded) / s.z_expanded < 0.02
    assert (s.x, s.y, s.z_used) == (200, 19, 4000)
    assert s.w == pytest.approx(1.5 - 0.48 / math.log(360))


def test_scalability_exponent_limits():
    assert scalability_exponent(1e300) == pytest.approx(1.5, abs=1e-3)
    assert scalability_exponent(360, "10") == pytest.approx(1.5 - 0.48 / math.log10(360))
    with pytest.raises(ValueError):
        scalability_exponent(360, "2")
    with pytest.raises(ValueError):
        scalability(20)


def test_suggested_pair_is_largest_fit():
    for cap in (100.0, 777.7, 4237.5, 10000.0):
        x, y = suggested_pair(cap)
        assert x * (1 + y) <= cap
        assert x in (math.floor(y * (y + 2) / 2), math.ceil(y * (y + 2) / 2))
        for yy in range(4, 200):
            for xx in {math.floor(yy * (yy + 2) / 2), math.ceil(yy * (yy + 2) / 2)}:
                z = xx * (1 + yy)
                if z <= cap:
                    assert z <= x * (1 + y)


def test_expanded_capacity_cost_parity():
    # the expanded network's approximate cost equals the flat committee's Z**2
    for Z in (360, 660, 1092):
        assert min_complexity(expanded_capacity(Z)) == pytest.approx(Z * Z)


def test_expansion_change_fields():
    e = expansion_change(360, 0.1)
    assert e.z_used == 4000
    s_exp = b2uh_success(200, 19, 0.1)
    assert e.i_prime == pytest.approx(success_change(s_exp, b2uh_success(40, 8, 0.1)))
    assert e.i_double == pytest.approx(success_change(s_exp, single_layer_success(360, 0.1)))


# --- Monte Carlo -----------------------------------------------------------------


@pytest.mark.parametrize("x,y,pf", [(12, 4, 0.2), (4, 4, 0.5), (20, 9, 0.3), (7, 13, 0.15)])
def test_monte_carlo_matches_closed_form(x, y, pf):
    est = monte_carlo_b2uh(x, y, pf, 200_000, seed=x * 100 + y)
    assert est.agrees(b2uh_success(x, y, pf))


def test_monte_carlo_seeded_and_degenerate():
    a = monte_carlo_b2uh(12, 4, 0.2, 10_000, 3)
    assert a == monte_carlo_b2uh(12, 4, 0.2, 10_000, 3)
    assert monte_carlo_b2uh(12, 4, 0.0, 1000, 0).value == 1.0
    assert monte_carlo_b2uh(12, 4, 1.0, 1000, 0).value == 0.0
    assert monte_carlo_b2uh(12, 4, 0.0, 1000, 0).agrees(1.0)


# --- rows / csv ------------------------------------------------------------------


def test_rows_and_csv(tmp_path):
    rows = success_rows([360], [0.1, 0.5]) + complexity_rows([360])
    path = tmp_path / "out.csv"
    write_csv(rows, path)
    with open(path, newline="") as fh:
        got = list(csv.DictReader(fh))
    assert tuple(got[0]) == CSV_COLUMNS
    models = {r["model"] for r in got}
    assert models == {"P_S1", "P_S2", "I", "I_prime", "I_double", "C_opt", "C_approx", "C_single"}
    c_opt = next(r for r in got if r["model"] == "C_opt")
    assert float(c_opt["value"]) == 4160
