import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracmap.energy import EnergyParams, energy
from fracmap.errors import DomainError
from fracmap.geometry import south_pole, stereo_lift
from fracmap.mesh import build_mesh, constant_field, identity_field, power_map
from fracmap.rescaling import (
    balance_ratio,
    conformal_rescale,
    kernel_bound_check,
    kernel_bounds,
    kernel_K,
    r_lambda,
    rescale_bound_check,
)

import oracles

HALF = EnergyParams(1, 0.5)


@pytest.fixture(scope="module")
def ring512():
    return build_mesh(1, 512)


# conformal rescale --------------------------------------------------------

def test_rescale_by_one_is_identity(ring512):
    u = power_map(ring512, 2)
    np.testing.assert_allclose(conformal_rescale(u, 1.0).values, u.values, atol=1e-14)


def test_rescale_keeps_constants(ring512):
    u = constant_field(ring512, [0.6, 0.8])
    np.testing.assert_allclose(conformal_rescale(u, 7.0).values, u.values, atol=1e-15)


@pytest.mark.parametrize("N", [128, 512])
def test_rescale_of_identity_is_closed_form(N):
    # identity pulled back: x -> tau(lam tau^{-1}(x)); interpolation is second order
    m = build_mesh(1, N)
    v = conformal_rescale(identity_field(m), 2.0)
    err = max(
        np.linalg.norm(v.values[i] - oracles.tau(2.0 * oracles.tau_inverse(x)))
        for i, x in enumerate(m.nodes) if x[1] < 0.999
    )
    assert err < m.spacing ** 2


def test_rescale_group_property(ring512):
    u = power_map(ring512, 2)
    back = conformal_rescale(conformal_rescale(u, 2.0), 0.5)
    step = np.max(np.linalg.norm(np.diff(u.values, axis=0), axis=1))
    assert np.max(np.linalg.norm(back.values - u.values, axis=1)) < 2 * step


def test_rescale_fixes_poles(ring512):
    u = power_map(ring512, 3)
    v = conformal_rescale(u, 5.0)
    for pole in (ring512.index_of([0, -1]), ring512.index_of([0, 1])):
        np.testing.assert_allclose(v.values[pole], u.values[pole], atol=1e-12)


@pytest.mark.parametrize("lam", [0.0, -1.0])
def test_rescale_rejects_nonpositive(ring512, lam):
    with pytest.raises(DomainError):
        conformal_rescale(identity_field(ring512), lam)


@pytest.mark.parametrize("k", [1, 2])
@pytest.mark.parametrize("lam", [1.2, 1.5, 1.9])
def test_energy_nearly_conformally_invariant(ring512, k, lam):
    u = power_map(ring512, k)
    e0 = energy(u, HALF)
    assert abs(energy(conformal_rescale(u, lam), HALF) - e0) / e0 < 0.01


def test_invariance_improves_with_refinement():
    devs = []
    for N in (128, 512):
        u = identity_field(build_mesh(1, N))
        e0 = energy(u, HALF)
        devs.append(abs(energy(conformal_rescale(u, 1.9), HALF) - e0) / e0)
    assert devs[1] < devs[0]


def test_rescale_on_icosphere_nearly_keeps_energy():
    m = build_mesh(2, 3)
    u = identity_field(m)
    p = EnergyParams(2, 0.9)
    v = conformal_rescale(u, 1.3)
    assert abs(energy(v, p) - energy(u, p)) / energy(u, p) < 0.05


# kernel -------------------------------------------------------------------

@given(st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(0.5, 0.95))
def test_kernel_trivial_cases(r, R, t):
    p = EnergyParams(1, 0.5, t)
    assert kernel_K(1.0, r, R, p) == pytest.approx(1.0, rel=1e-14)
    assert kernel_K(1.7, r, R, p.at(0.5)) == 1.0


@given(st.floats(0.05, 1.99), st.floats(0.5, 0.95), st.sampled_from([1, 2]))
def test_kernel_at_origin(lam, t, n):
    p = EnergyParams(n, 0.5, t)
    assert kernel_K(lam, 0.0, 0.0, p) == pytest.approx(lam ** (n * (t / 0.5 - 1)), rel=1e-12)


@given(st.floats(0.05, 1.99), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(0.5, 0.95))
def test_kernel_closed_form(lam, r, R, t):
    p = EnergyParams(1, 0.5, t)
    assert kernel_K(lam, r, R, p) == pytest.approx(oracles.kernel_closed_form(lam, r, R, 1, 0.5, t), rel=1e-12)


def test_kernel_bounds_at_equal_orders():
    b = kernel_bounds(1.3, HALF)
    assert b == {"both_inside": 1.0, "mixed": 1.0, "both_outside": 1.0}


@pytest.mark.parametrize("ratio", [1.0, 1.2, 1.4])
def test_kernel_bound_check_examples(ratio):
    p = EnergyParams(1, 0.5, 0.5 * ratio)
    assert kernel_bound_check(1.0, p, samples=2000)["max"] <= 0.0
    assert kernel_bound_check(1.5, p, samples=10_000)["max"] <= 0.0


def test_kernel_bound_check_at_t_equals_s_is_exactly_zero():
    assert kernel_bound_check(0.7, HALF, samples=500)["max"] == 0.0


@given(st.floats(0.01, 1.99), st.floats(1.0, 1.9), st.sampled_from([1, 2]), st.integers(0, 1000))
def test_kernel_bounds_hold_everywhere(lam, ratio, n, seed):
    s = 0.5 if n == 1 else 0.52
    p = EnergyParams(n, s, min(s * ratio, 0.99))
    assert kernel_bound_check(lam, p, samples=500, seed=seed)["max"] <= 1e-12


def test_kernel_bound_check_domain():
    with pytest.raises(DomainError):
        kernel_bound_check(2.0, HALF)


# rescaled-energy bound -----------------------------------------------------

@pytest.mark.parametrize("lam", [0.3, 1.0, 1.9])
def test_r_lambda(lam):
    # tau maps the chart interval (-lam, lam) onto the ball about S of radius r_lambda
    edge = stereo_lift(lam).coords
    assert r_lambda(lam) == pytest.approx(np.linalg.norm(edge - south_pole(1).coords), rel=1e-14)
    assert r_lambda(1.0) == pytest.approx(math.sqrt(2.0))


def test_rescale_bound_at_lambda_one_is_partition(ring512):
    u = power_map(ring512, 2)
    p = EnergyParams(1, 0.5, 0.6)
    rep = rescale_bound_check(u, 1.0, p)
    assert rep.r_lambda == pytest.approx(math.sqrt(2.0))
    assert rep.lhs == pytest.approx(rep.ball_energy + rep.complement_energy, rel=1e-12)
    expected = (rep.ball_factor - 1) * rep.ball_energy + (rep.complement_factor - 1) * rep.complement_energy
    assert rep.slack == pytest.approx(expected, rel=1e-9)
    assert rep.slack >= 0


def test_rescale_bound_constant_field(ring512):
    rep = rescale_bound_check(constant_field(ring512, [1, 0]), 1.5, EnergyParams(1, 0.5, 0.6))
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.slack == 0.0


@pytest.mark.parametrize("lam", [1.2, 1.5])
@pytest.mark.parametrize("t", [0.55, 0.6])
def test_rescale_bound_identity(ring512, lam, t):
    rep = rescale_bound_check(identity_field(ring512), lam, EnergyParams(1, 0.5, t))
    assert rep.slack >= -0.01 * rep.lhs


def test_rescale_bound_domain(ring512):
    with pytest.raises(DomainError):
        rescale_bound_check(identity_field(ring512), 1.5, HALF)
    with pytest.raises(DomainError):
        rescale_bound_check(identity_field(ring512), 2.5, EnergyParams(1, 0.5, 0.6))


# balance --------------------------------------------------------------------

def test_balance_constant_field(ring512):
    rep = balance_ratio(constant_field(ring512, [1, 0]), south_pole(1), 0.5, EnergyParams(1, 0.5, 0.6))
    assert rep.lhs == 0.0 and rep.rhs_core == 0.0 and rep.implied_constant == 0.0


@pytest.mark.parametrize("rho", [0.0, 0.9, 1.99])
def test_balance_rejects_large_radius(ring512, rho):
    with pytest.raises(DomainError):
        balance_ratio(identity_field(ring512), south_pole(1), rho, HALF)


def test_balance_implied_constant_formula(ring512):
    p = EnergyParams(1, 0.5, 0.6)
    rep = balance_ratio(identity_field(ring512), south_pole(1), 0.5, p)
    assert math.isfinite(rep.implied_constant) and rep.implied_constant > 0
    assert rep.implied_constant == pytest.approx(rep.lhs * 0.5 ** 0.2 / rep.rhs_core, rel=1e-14)
    assert rep.to_dict()["center"] == [0.0, -1.0]
