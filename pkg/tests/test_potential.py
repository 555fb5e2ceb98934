import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import homwell as hw
from homwell.potential import (
    BASE_WELLS,
    CheckerboardModulation,
    ConstantModulation,
    SineModulation,
    default_truncation_radius,
    make_modulation,
    make_potential,
)

# dyadic lattice points: x + integer shifts stay exactly representable, so
# periodicity can be asserted with == instead of a tolerance
dyadic = st.integers(min_value=-3 * 2**20, max_value=3 * 2**20).map(
    lambda k: k / 2**20)


def test_quartic_scalar_values():
    base = BASE_WELLS["quartic_scalar"](-1.0, 1.0)
    # (p^2 - 1)^2 by hand
    assert base.value(np.array([[0.0]])) == pytest.approx(1.0, abs=1e-15)
    assert base.value(np.array([[0.5]])) == pytest.approx(0.5625, abs=1e-15)
    assert base.value(np.array([[1.0]])) == 0.0
    assert base.value(np.array([[-1.0]])) == 0.0
    # d/dp = 4 p (p^2 - 1)
    g = base.gradient(np.array([[0.5]]))
    assert g[0, 0] == pytest.approx(-1.5, abs=1e-14)


def test_quadratic_product_2d():
    base = BASE_WELLS["quadratic_product"](np.zeros(2), np.ones(2))
    p = np.array([[0.5, 0.5]])
    assert base.value(p)[0] == pytest.approx(0.25, abs=1e-15)
    # gradient vanishes at the symmetric midpoint
    np.testing.assert_allclose(base.gradient(p)[0], [0.0, 0.0], atol=1e-15)


def test_quartic_vector_reduces_to_scalar():
    vec = BASE_WELLS["quartic_vector"](np.array([-1.0]), np.array([1.0]))
    sca = BASE_WELLS["quartic_scalar"](-1.0, 1.0)
    p = np.linspace(-2.0, 2.0, 21)[:, None]
    np.testing.assert_allclose(vec.value(p), sca.value(p), rtol=1e-13)


def test_quartic_vector_unit_section():
    # along the well axis the normalized profile is (1 - t^2)^2 regardless of
    # well separation
    a = np.array([0.0, 0.0])
    b = np.array([3.0, 4.0])
    vec = BASE_WELLS["quartic_vector"](a, b)
    mid = 0.5 * (a + b)
    assert vec.value(mid[None])[0] == pytest.approx(1.0, rel=1e-12)


def test_wells_must_differ():
    with pytest.raises(ValueError):
        BASE_WELLS["quartic_scalar"](1.0, 1.0)


@pytest.mark.parametrize("name,params,mean", [
    ("constant", {"value": 2.5}, 2.5),
    ("sine", {"alpha": 0.5}, 1.0),
    ("checkerboard", {"values": (1.0, 2.0)}, 1.5),
])
def test_modulation_exact_means(name, params, mean):
    mod = make_modulation(name, **params)
    assert mod.mean_exact() == pytest.approx(mean, abs=1e-15)


def test_checkerboard_parity():
    mod = CheckerboardModulation(1.0, 2.0)
    assert mod.value(np.array([[0.1, 0.1]])) == 1.0
    assert mod.value(np.array([[0.6, 0.1]])) == 2.0
    assert mod.value(np.array([[0.6, 0.6]])) == 1.0


def test_sine_needs_subunit_alpha():
    with pytest.raises(ValueError):
        SineModulation(alpha=1.0)


def test_make_modulation_rejects_stray_params():
    with pytest.raises(ValueError):
        make_modulation("checkerboard", low=1.0, high=2.0)


@given(x1=dyadic, x2=dyadic, p=st.floats(-2.0, 2.0))
def test_periodicity_exact(x1, x2, p):
    spec = make_potential("quartic_scalar", modulation="checkerboard",
                          modulation_params={"values": (1.0, 2.0)}, dim_x=2)
    x = np.array([x1, x2])
    shifted = x + np.array([1.0, 0.0])
    assert hw.eval_W(spec, x, p) == hw.eval_W(spec, shifted, p)


@given(p=st.floats(-3.0, 3.0), q=st.floats(-3.0, 3.0))
def test_lipschitz_bound_on_samples(p, q):
    spec = make_potential("quartic_scalar", modulation="sine",
                          modulation_params={"alpha": 0.5}, dim_x=1)
    L = spec.lipschitz_constant(3.0)
    x = np.array([0.3])
    lhs = abs(hw.eval_W(spec, x, p) - hw.eval_W(spec, x, q))
    assert lhs <= L * abs(p - q) + 1e-9


def test_multiplicative_structure():
    spec = make_potential("quartic_scalar", modulation="sine",
                          modulation_params={"alpha": 0.3}, dim_x=2)
    x = np.array([0.2, 0.7])
    m = spec.modulation_at(x)
    w0 = BASE_WELLS["quartic_scalar"](-1.0, 1.0).value(np.array([[0.4]]))[0]
    assert hw.eval_W(spec, x, 0.4) == pytest.approx(m * w0, rel=1e-14)


def test_growth_envelope_sampled(rng):
    spec = make_potential("quartic_scalar", modulation="checkerboard", dim_x=2)
    C = spec.growth_constant
    q = spec.growth_exponent
    for _ in range(50):
        p = rng.uniform(-20.0, 20.0)
        x = rng.uniform(0.0, 1.0, size=2)
        w = hw.eval_W(spec, x, p)
        assert w <= C * (1.0 + abs(p) ** q)
        assert w >= abs(p) ** q / C - C


def test_default_radius_value():
    spec = make_potential("quartic_scalar", dim_x=1, modulation="constant")
    assert default_truncation_radius(spec) == pytest.approx(8.0)


def test_truncation_cap_unit_radius():
    # sup of (p^2-1)^2 over |p| <= 1 is exactly 1 at p = 0
    spec = make_potential("quartic_scalar", modulation="constant", dim_x=1)
    tpot = hw.truncate(spec, radius=1.0, safety=1.0)
    assert tpot.cap == pytest.approx(1.0, rel=1e-12)
    # beyond the cap the truncated density saturates
    assert tpot.density(np.array([[0.5]]), np.array([[5.0]]))[0] == tpot.cap


def test_truncate_radius_must_cover_wells():
    spec = make_potential("quartic_scalar", modulation="constant", dim_x=1)
    with pytest.raises(ValueError):
        hw.truncate(spec, radius=0.5)


def test_truncated_gradient_zero_past_cap():
    spec = make_potential("quartic_scalar", modulation="constant", dim_x=1)
    tpot = hw.truncate(spec, radius=1.0, safety=1.0)
    g = tpot.grad_p(np.array([[0.5]]), np.array([[5.0]]))
    np.testing.assert_allclose(g, 0.0)


def test_scaled_spec_scales_density():
    spec = make_potential("quartic_scalar", modulation="checkerboard", dim_x=2)
    doubled = spec.scaled(2.0)
    x = np.array([0.3, 0.8])
    assert hw.eval_W(doubled, x, 0.7) == pytest.approx(
        2.0 * hw.eval_W(spec, x, 0.7), rel=1e-15)
    np.testing.assert_allclose(doubled.wells[0], spec.wells[0])


def test_hypotheses_pass_on_clean_spec():
    spec = make_potential("quartic_scalar", modulation="sine",
                          modulation_params={"alpha": 0.5}, dim_x=2)
    report = hw.validate_hypotheses(spec)
    assert report.passed, report.summary()


def test_hypotheses_flag_vanishing_floor():
    # one checkerboard phase at zero kills the lower barrier and inflates the
    # zero set, while the growth envelope still holds on samples
    spec = make_potential("quartic_scalar", modulation="checkerboard",
                          modulation_params={"values": (0.0, 2.0)}, dim_x=2)
    report = hw.validate_hypotheses(spec)
    assert not report.checks["H2 zero set"].passed
    assert not report.checks["H3 lower barrier"].passed
    assert report.checks["H4 growth"].passed
    assert not report.passed


def test_eval_w_scalar_x_needs_1d():
    spec = make_potential("quartic_scalar", modulation="constant", dim_x=2)
    with pytest.raises(ValueError):
        hw.eval_W(spec, 0.5, 0.0)
