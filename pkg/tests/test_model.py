import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special, stats

from contactcorr.model import (FirstOrderInit, Kernel, ModelParams, SecondOrderInit, decay_witness,
                               gaussian_params, kernel_density, kernel_fourier, kernel_sample,
                               kernel_violations, sphere_area, validate_params)
from contactcorr.spectral import FourierGrid

KERNELS = [Kernel.gaussian(1.0, d) for d in (1, 2, 3)] + [Kernel.tent(1.5, d) for d in (1, 2, 3)] \
    + [Kernel.gaussian(0.7, 3)]


def radial_fourier_quad(k: Kernel, p: float) -> float:
    """Oracle: Hankel-type radial integral of the density."""
    d, upper = k.d, (k.scale if k.family == "tent" else 30 * k.scale)
    if d == 1:
        g = lambda r: 2 * k.radial_density(r) * math.cos(p * r)
    elif d == 2:
        g = lambda r: 2 * math.pi * r * k.radial_density(r) * special.j0(p * r)
    else:
        g = lambda r: 4 * math.pi * r * r * k.radial_density(r) * (np.sinc(p * r / math.pi))
    return integrate.quad(g, 0, upper, limit=400, epsabs=1e-14, epsrel=1e-12)[0]


def test_gaussian_density_value():
    assert kernel_density(Kernel.gaussian(1.0, 1), 0.0) == pytest.approx(0.3989423, abs=1e-7)


def test_tent_compact_support():
    k = Kernel.tent(2.0, 3)
    x = np.array([[2.0, 0, 0], [0, 3.0, 0], [1.5, 1.5, 0.0]])
    assert np.all(kernel_density(k, x) == 0)


@pytest.mark.parametrize("k", KERNELS, ids=lambda k: f"{k.family}-d{k.d}")
def test_fourier_matches_radial_quadrature(k):
    for p in (0.0, 0.05, 0.3, 1.0, 2.5, 6.0):
        assert kernel_fourier(k, p) == pytest.approx(radial_fourier_quad(k, p), abs=1e-9)


def test_gaussian_fourier_closed_form():
    assert kernel_fourier(Kernel.gaussian(1.0, 1), 1.0) == pytest.approx(0.6065307, abs=1e-7)


@pytest.mark.parametrize("k", KERNELS, ids=lambda k: f"{k.family}-d{k.d}")
def test_fourier_at_zero_and_bound(k):
    p = np.linspace(0, 40 / k.scale, 4001)
    ah = kernel_fourier(k, p)
    assert ah[0] == 1.0
    assert np.all(np.abs(ah) <= 1 + 1e-12)


@pytest.mark.parametrize("k", KERNELS, ids=lambda k: f"{k.family}-d{k.d}")
def test_small_p_expansion(k):
    # a_hat(p) - 1 ~ -m2 |p|^2 / (2 d)
    p = 1e-3 / k.scale
    ratio = (1 - kernel_fourier(k, p)) / (k.second_moment * p * p / (2 * k.d))
    assert ratio == pytest.approx(1.0, rel=1e-5)


@pytest.mark.parametrize("k", KERNELS, ids=lambda k: f"{k.family}-d{k.d}")
def test_moments_match_quadrature(k):
    upper = k.scale if k.family == "tent" else 30 * k.scale
    for order in (0, 2, 4):
        q = integrate.quad(lambda r: sphere_area(k.d) * r ** (k.d - 1 + order) * k.radial_density(r), 0, upper,
                           epsabs=1e-13, epsrel=1e-12)[0]
        assert k.moment(order) == pytest.approx(q, rel=1e-9)


def test_tent_series_branch_is_continuous():
    for d in (1, 2, 3):
        k = Kernel.tent(1.0, d)
        lo, hi = kernel_fourier(k, 0.1 - 1e-12), kernel_fourier(k, 0.1 + 1e-12)
        assert abs(lo - hi) < 1e-10


def test_gaussian_sampler_second_moment():
    rng = np.random.default_rng(11)
    k = Kernel.gaussian(1.3, 3)
    x = kernel_sample(k, rng, 100_000)
    sq = np.sum(x * x, axis=1)
    se = sq.std(ddof=1) / math.sqrt(len(sq))
    assert abs(sq.mean() - 3 * 1.3**2) < 3 * se


def test_tent_sampler_support_and_law():
    rng = np.random.default_rng(5)
    k = Kernel.tent(2.0, 3)
    x = kernel_sample(k, rng, 20_000)
    r = np.linalg.norm(x, axis=1)
    assert np.all(r < 2.0)
    # radial law of the tent in d=3 is Beta(3, 2) scaled by the radius
    assert stats.kstest(r / 2.0, stats.beta(3, 2).cdf).pvalue > 1e-3


def test_sampler_deterministic():
    k = Kernel.tent(1.0, 2)
    a = kernel_sample(k, np.random.default_rng(3), 50)
    b = kernel_sample(k, np.random.default_rng(3), 50)
    assert np.array_equal(a, b)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.2, 5.0), st.integers(1, 3), st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_density_even_and_nonnegative(scale, d, x):
    for k in (Kernel.gaussian(scale, d), Kernel.tent(scale, d)):
        v = np.array(x[:d])
        assert kernel_density(k, v) >= 0
        assert kernel_density(k, v) == kernel_density(k, -v)


def test_validate_valid_params():
    assert validate_params(gaussian_params(0.5, 0.5, 0.5)) == []


def test_validate_zero_cross_rate():
    assert validate_params(gaussian_params(0.5, 0.5, 0.0)) == ["lambda_cross must be > 0"]


class _Unnormalised(Kernel):
    def radial_density(self, r):
        return 0.9 * super().radial_density(r)


def test_validate_unnormalised_kernel():
    bad = _Unnormalised("gaussian", 1.0, 3)
    params = ModelParams(0.5, 0.5, 0.5, bad, Kernel.gaussian(1.0, 3), Kernel.gaussian(1.0, 3))
    problems = validate_params(params)
    assert len(problems) == 1 and "normalization" in problems[0]


def test_validate_mixed_dimensions():
    params = ModelParams(0.5, 0.5, 0.5, Kernel.gaussian(1.0, 3), Kernel.gaussian(1.0, 2), Kernel.gaussian(1.0, 3))
    assert "kernels must share dimension d" in validate_params(params)


def test_tent_in_three_dimensions_fails_fourier_integrability():
    # |a_hat| decays like |p|^-3 in d = 3, which is not integrable
    problems = kernel_violations("kernel_plus", Kernel.tent(1.0, 3))
    assert any("not integrable" in p for p in problems)
    assert kernel_violations("kernel_plus", Kernel.tent(1.0, 2)) == []


def test_decay_witness_finite():
    for k in (Kernel.gaussian(1.0, 3), Kernel.tent(1.0, 3)):
        a = decay_witness(k, 7.0)
        r = np.linspace(0, 30, 3001)
        assert np.all(k.radial_density(r) <= a / (1 + r) ** 7 * (1 + 1e-9))
    assert kernel_violations("k", Kernel.gaussian(1.0, 3), delta=5.0) == ["k: decay exponent delta must exceed 2d"]


def test_mu_derived():
    p = gaussian_params(0.7, 1.2, 0.3)
    assert p.mu_plus == pytest.approx(-0.3) and p.mu_minus == pytest.approx(0.2)


def test_first_order_init_checks():
    g = FourierGrid(3, 16, 20.0)
    bump = -1.5 * np.exp(-0.5 * g.radius() ** 2)
    assert FirstOrderInit(1.0, 2.0, psi_minus=bump, grid=g).violations() == []
    bad = FirstOrderInit(1.0, 1.0, psi_minus=bump, grid=g).violations()
    assert "alpha_minus must be > 0" in bad
    assert "fluctuation fields need a grid" in FirstOrderInit(1.0, 2.0, psi_minus=bump).violations()
    assert FirstOrderInit(1.0, 2.0).translation_invariant


def test_second_order_init_checks():
    g = FourierGrid(3, 16, 20.0)
    first = FirstOrderInit(1.0, 2.0)
    pois = SecondOrderInit.poisson(first)
    assert (pois.c_pp, pois.c_pm, pois.c_mm) == (1.0, 2.0, 4.0)
    assert pois.violations(first) == []
    odd = np.zeros(g.shape)
    odd[1, 0, 0] = 0.1
    s = SecondOrderInit(1, 1, 1, phi_pp=odd, grid=g)
    assert "phi_pp must be even" in s.violations()
    shifted = FirstOrderInit(1.0, 2.0, psi_plus=np.exp(-g.radius() ** 2), grid=g)
    assert "translation invariance requires psi_plus = psi_minus = 0" in pois.violations(shifted)
