import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy import integrate

from streamlsh.analysis import (
    PRESETS, PointQuality, SPParams, ThresholdAge, UniformQuality, adaptive_simpson, check_equal_capacity, csp,
    csp_empirical, csp_quality, expected_copies, expected_index_size, grid_rows, preset_rows,
    quality_insensitive_p, sb, sp_dynapop, sp_smooth, sp_threshold, success_probability,
)
from streamlsh.errors import DomainError, ValidationError
from streamlsh.policies import Bucket, Smooth

unit = st.floats(0.0, 1.0)
interior = st.floats(0.01, 0.99)


def test_sp_threshold_examples():
    assert sp_threshold(10, 15, 1.0, 0, 1.0, 20) == 1.0
    assert sp_threshold(10, 15, 0.9, 20, 1.0, 20) == 0.0
    assert sp_threshold(10, 15, 0.9, 19.5, 1.0, 20) == pytest.approx(0.99839, abs=1e-5)


def test_sp_smooth_examples():
    assert sp_smooth(10, 15, 0.95, 1.0, 0, 1.0) == 1.0
    assert sp_smooth(10, 15, 0.95, 0.9, 5, 0.0) == 0.0
    # p^20 s^10 = 0.35849 * 0.34868 = 0.12500, 1 - 0.87500^15 = 0.86506
    assert sp_smooth(10, 15, 0.95, 0.9, 20, 1.0) == pytest.approx(0.86506, abs=1e-5)


def test_success_probability_dispatch_and_validation():
    assert success_probability(SPParams(10, 15, Smooth(0.95), 0.9, 20)) == sp_smooth(10, 15, 0.95, 0.9, 20, 1.0)
    assert success_probability(SPParams(10, 15, ThresholdAge(20), 0.9, 3)) == sp_threshold(10, 15, 0.9, 3, 1, 20)
    with pytest.raises(ValidationError):
        SPParams(10, 15, Bucket(3), 0.9, 1)
    with pytest.raises(ValidationError):
        SPParams(10, 15, Smooth(0.9), 1.2, 1)


@given(st.integers(1, 20), st.integers(1, 30), interior, unit, st.floats(0, 200), unit)
def test_success_probabilities_are_probabilities(k, L, p, s, a, z):
    assert 0.0 <= sp_smooth(k, L, p, s, a, z) <= 1.0
    assert 0.0 <= sp_threshold(k, L, s, a, z, 20) <= 1.0


@given(interior, st.floats(0.3, 0.99), st.floats(0.0, 60), st.floats(0.2, 1.0))
def test_sp_smooth_monotonicity(p, s, a, z):
    base = sp_smooth(10, 15, p, s, a, z)
    assume(1e-9 < base < 1 - 1e-9)
    assert sp_smooth(10, 15, p, s, a + 1, z) < base
    assert sp_smooth(10, 15, p, min(1.0, s + 0.01), a, z) > base
    assert sp_smooth(10, 15, p, s, a, z * 0.9) < base
    if a >= 1:
        assert sp_smooth(10, 15, min(0.999, p + 0.005), s, a, z) > base


# -- cumulative success ------------------------------------------------------


def test_adaptive_simpson_matches_known_integrals():
    assert adaptive_simpson(math.sin, 0.0, math.pi) == pytest.approx(2.0, abs=1e-9)
    assert adaptive_simpson(lambda x: x**9, 0.0, 1.0) == pytest.approx(0.1, abs=1e-10)


def test_csp_rejects_degenerate_interval():
    with pytest.raises(DomainError):
        csp(Smooth(0.95), 10, 15, 1.0, 10)


def test_csp_point_mass_limit():
    assert csp(Smooth(0.95), 10, 15, 1.0 - 1e-9, 0) == pytest.approx(1.0, abs=1e-6)


def test_threshold_truncation_inactive_below_cutoff():
    t = ThresholdAge(20)
    untruncated = ThresholdAge(10**6)
    for r_age in (0, 5, 19):
        assert csp(t, 10, 15, 0.8, r_age) == pytest.approx(csp(untruncated, 10, 15, 0.8, r_age), abs=1e-12)
    assert csp(t, 10, 15, 0.8, 40) < csp(untruncated, 10, 15, 0.8, 40)


@pytest.mark.parametrize("policy", [Smooth(0.95), ThresholdAge(20)])
@pytest.mark.parametrize("r_sim,r_age", [(0.8, 10), (0.9, 35), (0.6, 100)])
def test_csp_matches_independent_quadrature(policy, r_sim, r_age):
    # oracle: scipy quad in s with the same exact age sum and (R_age + 1) normalization
    ages = np.arange(r_age + 1)
    if isinstance(policy, Smooth):
        keep = policy.p ** ages
    else:
        keep = (ages < policy.t_age).astype(float)
    ref = integrate.quad(lambda s: np.sum(1 - (1 - keep * s**10) ** 15), r_sim, 1.0, epsabs=1e-12)[0]
    ref /= (1 - r_sim) * (r_age + 1)
    assert csp(policy, 10, 15, r_sim, r_age) == pytest.approx(ref, abs=1e-6)


def test_csp_quadrature_converged():
    coarse = csp(Smooth(0.95), 10, 15, 0.7, 50, tol=1e-6)
    fine = csp(Smooth(0.95), 10, 15, 0.7, 50, tol=1e-10)
    assert abs(coarse - fine) < 1e-6


def test_csp_empirical_approaches_uniform_csp():
    rng = np.random.default_rng(0)
    s = rng.uniform(0.8, 1.0, 200_000)
    a = rng.integers(0, 31, 200_000)
    assert csp_empirical(Smooth(0.95), 10, 15, s, a) == pytest.approx(csp(Smooth(0.95), 10, 15, 0.8, 30), abs=2e-3)
    with pytest.raises(DomainError):
        csp_empirical(Smooth(0.95), 10, 15, [], [])


def test_csp_quality_reductions():
    plain = csp(Smooth(0.95), 10, 15, 0.8, 30)
    assert csp_quality("sensitive", 10, 15, 0.95, 0.8, 30, 1.0, PointQuality(1.0)) == pytest.approx(plain)
    assert csp_quality("sensitive", 10, 15, 0.9, 0.8, 30, 0.0, PointQuality(1.0)) == pytest.approx(
        csp_quality("insensitive", 10, 15, 0.9, 0.8, 30, 0.0, PointQuality(1.0)))
    with pytest.raises(DomainError):
        csp_quality("sensitive", 10, 15, 0.95, 0.8, 30, 1.0, UniformQuality())
    with pytest.raises(ValidationError):
        csp_quality("other", 10, 15, 0.95, 0.8, 30, 0.5)


def test_csp_quality_matches_double_quadrature():
    p, r_sim, r_age, r_q = 0.95, 0.8, 20, 0.5
    keep = p ** np.arange(r_age + 1)
    ref = integrate.dblquad(lambda s, z: np.sum(1 - (1 - z * keep * s**10) ** 15), r_q, 1.0, r_sim, 1.0,
                            epsabs=1e-11)[0]
    ref /= (1 - r_q) * (1 - r_sim) * (r_age + 1)
    assert csp_quality("sensitive", 10, 15, p, r_sim, r_age, r_q) == pytest.approx(ref, abs=1e-6)


def test_quality_insensitive_retention_matches_size():
    p_i = quality_insensitive_p(0.95, 0.5)
    assert p_i == pytest.approx(0.9)
    assert expected_index_size(100, 0.5, 0.95, 15) == pytest.approx(expected_index_size(100, 1.0, p_i, 15))


# -- popularity --------------------------------------------------------------


def test_sb_examples():
    assert sb(0.95, 1.0, 1.0, 1.0) == 1.0
    assert sb(0.95, 1.0, 0.0, 1.0) == 0.0
    assert sb(0.95, 1.0, 0.5, 1.0) == pytest.approx(0.95238, abs=1e-5)
    with pytest.raises(DomainError):
        sb(1.0, 1.0, 0.0, 1.0)


def test_sb_matches_markov_chain_fixed_point():
    # oracle: iterate P <- x + (1 - x) p P (insert, else survive) to its fixed point
    for p, u, rho, z in [(0.9, 0.25, 0.125, 1.0), (0.95, 0.5, 0.5, 0.7), (0.8, 1.0, 0.3, 0.2)]:
        x = z * u * rho
        prob = 0.0
        for _ in range(5000):
            prob = x + (1 - x) * p * prob
        assert sb(p, u, rho, z) == pytest.approx(prob, abs=1e-12)


@given(st.floats(0.05, 0.99), st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.floats(0.05, 1.0))
def test_sb_monotone_in_every_argument(p, u, rho, z):
    base = sb(p, u, rho, z)
    assert 0.0 <= base <= 1.0
    assert sb(min(0.999, p + 0.001), u, rho, z) >= base
    assert sb(p, u * 0.9, rho, z) <= base
    assert sb(p, u, rho * 0.9, z) <= base
    assert sb(p, u, rho, z * 0.9) <= base


def test_sp_dynapop_examples():
    assert sp_dynapop(10, 15, 0.95, 1.0, 0.9, 0.0, 1.0) == 0.0
    assert sp_dynapop(10, 15, 0.95, 1.0, 1.0, 1.0, 1.0) == 1.0
    ranks = [sp_dynapop(10, 15, 0.95, 1.0, 0.8, 1 / r, 1.0) for r in range(1, 101)]
    assert all(a >= b for a, b in zip(ranks, ranks[1:]))


# -- sizes and copies ----------------------------------------------------------


def test_expected_index_size_examples():
    assert expected_index_size(100, 1.0, 0.95, 15) == pytest.approx(30000)
    assert expected_index_size(100, 0.0, 0.95, 15) == 0.0
    # Smooth p=0.95 has the capacity of Threshold with T_size = 20 mu phi
    assert expected_index_size(100, 0.7, 0.95, 1) == pytest.approx(20 * 100 * 0.7)
    with pytest.raises(ValidationError):
        expected_index_size(100, 1.0, 1.0, 15)


def test_expected_copies_examples():
    for z in (1.0, 0.5):
        assert expected_copies(Smooth(0.95), 15, z, 0) == z * 15
        assert expected_copies(ThresholdAge(20), 15, z, 0) == z * 15
    assert expected_copies(Smooth(0.95), 15, 0.5, 20) == pytest.approx(2.689, abs=1e-3)
    assert expected_copies(ThresholdAge(20), 15, 1.0, 20) == 0.0
    assert ThresholdAge.from_size(20000, 1000).t_age == 20


def test_check_equal_capacity():
    check_equal_capacity({"a": 100.0, "b": 95.0})
    with pytest.raises(ValidationError):
        check_equal_capacity({"a": 100.0, "b": 80.0})


# -- sweeps ------------------------------------------------------------------


def test_every_preset_builds():
    for name in PRESETS:
        rows = preset_rows(name)
        assert rows
        for row in rows:
            for key, value in row.items():
                if isinstance(value, float) and key not in ("z", "p", "u", "rho", "w", "s"):
                    assert 0.0 <= value <= 15.0


def test_fig4a_preset_axes():
    rows = preset_rows("fig4a")
    assert [r["R_age"] for r in rows] == list(range(10, 101, 10))
    assert {r["R_sim"] for r in rows} == {0.8}
    assert all("threshold" in r and "smooth" in r for r in rows)


def test_fig2_preset_axes():
    rows = preset_rows("fig2")
    assert {r["z"] for r in rows} == {1.0, 0.5}
    assert sorted({r["age"] for r in rows}) == list(range(61))


def test_unknown_preset():
    with pytest.raises(ValidationError):
        preset_rows("fig99")


def test_grid_rows():
    rows = grid_rows("sb", {"rho": [0.5]}, {"p": 0.95, "u": 1.0})
    assert len(rows) == 1 and rows[0]["value"] == pytest.approx(0.95238, abs=1e-5)
    rows = grid_rows("sp_smooth", {"s": [0.7, 0.8], "a": [0, 10, 20]}, {"k": 10, "L": 15, "p": 0.95})
    assert len(rows) == 6
    with pytest.raises(ValidationError):
        grid_rows("nope", {}, {})
    with pytest.raises(ValidationError):
        grid_rows("sb", {"rho": [0.5]}, {"p": 0.95})
