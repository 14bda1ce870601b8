import math

import numpy as np
import pytest
from scipy import integrate, special

from contactcorr.analysis import (analytic_pair_bins, build_majorant, check_lemma_boundint, check_lemma_int_a,
                                  compare_sim_analytic, degenerate_sup, one_minus_a_slope,
                                  refinement_grids, shell_average_weights)
from contactcorr.model import FirstOrderInit, Kernel, gaussian_params
from contactcorr.simulator import SimConfig
from contactcorr.spectral import FourierGrid, build_symbols, phi1

GAUSS_B = lambda p: np.exp(-0.5 * p**2)


def test_boundint_example():
    t0 = math.log(0.5) / (-1.0)
    assert t0 == pytest.approx(math.log(2))
    assert phi1(-1.0, -2.0, t0) == pytest.approx(0.25, abs=1e-15)
    t = np.linspace(0, 100, 200_001)
    assert t[np.argmax(phi1(-1.0, -2.0, t))] == pytest.approx(t0, abs=1e-3)


def test_boundint_sweep():
    rep = check_lemma_boundint(2000, np.random.default_rng(0))
    assert rep.passed and "consistent with" in rep.message
    assert rep.cases == 2000


def test_boundint_is_reproducible():
    a = check_lemma_boundint(200, np.random.default_rng(5))
    b = check_lemma_boundint(200, np.random.default_rng(5))
    assert a == b


@pytest.mark.parametrize("a", [-0.1, -1.0, -7.0])
def test_degenerate_sup(a):
    t = np.linspace(0, 50 / abs(a), 500_001)
    assert np.max(t * np.exp(t * a)) == pytest.approx(degenerate_sup(a), rel=1e-8)
    assert phi1(a, a, -1 / a) == pytest.approx(degenerate_sup(a), rel=1e-12)


def test_int_a_converges_in_three_dimensions():
    rep = check_lemma_int_a(Kernel.gaussian(1.0, 3), GAUSS_B)
    assert rep.verdict == "converges" and "consistent with" in rep.message
    # oracle: radial integral of b / (1 - a_hat) with the 1/p^2 singularity integrable in d = 3
    exact = integrate.quad(lambda p: 4 * math.pi * p * p * math.exp(-0.5 * p * p) / -math.expm1(-0.5 * p * p),
                           0, 40, limit=200)[0] / (2 * math.pi) ** 3 * (2 * math.pi) ** 3
    assert rep.sums[-1] == pytest.approx(exact, rel=0.05)


def test_int_a_diverges_in_one_dimension():
    rep = check_lemma_int_a(Kernel.gaussian(1.0, 1), GAUSS_B)
    assert rep.verdict == "diverges"
    assert all(r >= 2 for r in rep.ratios)


def test_int_a_slope():
    for k in (Kernel.gaussian(1.0, 3), Kernel.gaussian(2.5, 3), Kernel.tent(1.0, 3), Kernel.gaussian(1.0, 1)):
        assert one_minus_a_slope(k) == pytest.approx(2.0, abs=0.1)
    assert check_lemma_int_a(Kernel.gaussian(1.0, 3), GAUSS_B).slope_ok


def test_int_a_rejects_mixed_dimensions():
    with pytest.raises(ValueError):
        check_lemma_int_a(Kernel.gaussian(1.0, 3), GAUSS_B, refinement_grids(1))


def test_refinement_grids_halve_frequency_step():
    gs = refinement_grids(3, levels=3)
    assert [g.dp for g in gs] == pytest.approx([gs[0].dp / 2**k for k in range(3)])
    assert len({g.dx for g in gs}) == 1


@pytest.mark.parametrize("lp,lm", [(1.0, 0.5), (0.5, 1.0)])
def test_majorant_dominates_and_is_integrable(lp, lm):
    params = gaussian_params(lp, lm, 0.5)
    grid = FourierGrid(3, 16, 20.0)
    rep = build_majorant(build_symbols(params, grid), c_plus=1.0, c_minus=2.0, grid=grid)
    assert rep.case == (1 if lp == 1 else 2)
    assert rep.dominated and rep.worst_ratio <= 1
    assert rep.stable and rep.denominator_bound_ok
    # the majorant carries the integrable 1/|p|^2 pole at the origin only
    for m in rep.majorant.values():
        m = np.asarray(m).ravel()
        assert np.all(np.isfinite(m[1:])) and np.all(m >= 0)


def test_majorant_with_initial_fluctuation():
    params = gaussian_params(0.5, 1.0, 0.5)
    grid = FourierGrid(3, 16, 20.0)
    b = 0.3 * np.exp(-0.5 * grid.p_norm() ** 2)
    rep = build_majorant(build_symbols(params, grid), b_field=b, c_minus=2.0)
    assert rep.dominated


def test_majorant_requires_stable_case():
    with pytest.raises(ValueError):
        build_majorant(build_symbols(gaussian_params(0.9, 0.8, 0.5), FourierGrid(3, 16, 20.0)))


def test_shell_weights_reproduce_radial_average():
    # shell average of a Gaussian whose transform is known, against direct radial quadrature
    edges = np.array([0.0, 0.5, 1.3, 2.0])
    x, w = np.polynomial.legendre.leggauss(400)
    q, w = 6 * (x + 1), 6 * w
    for d in (1, 2, 3):
        f = lambda r: (2 * math.pi) ** (-d / 2) * math.exp(-0.5 * r * r)
        avg = shell_average_weights(q, edges, d) @ (np.exp(-0.5 * q * q) * w)
        for j in range(3):
            r1, r2 = edges[j], edges[j + 1]
            num = integrate.quad(lambda r: r ** (d - 1) * f(r), r1, r2)[0]
            assert avg[j] == pytest.approx(num * d / (r2**d - r1**d), rel=1e-8)


def test_analytic_pair_bins_at_time_zero_are_poisson():
    params = gaussian_params(1.0, 0.5, 0.5)
    bins = analytic_pair_bins(params, 1.0, 2.0, 0.0, np.linspace(0, 2, 5))
    assert np.allclose(bins["pp"], 1.0, atol=1e-12)
    assert np.allclose(bins["pm"], 2.0, atol=1e-12)
    assert np.allclose(bins["mm"], 4.0, atol=1e-12)


def test_analytic_pair_bins_match_grid_engine():
    from contactcorr.evolution2 import k2_closed
    from contactcorr.model import SecondOrderInit
    params = gaussian_params(1.0, 0.5, 0.5)
    init1 = FirstOrderInit(1.0, 2.0)
    # shell sampling on the grid converges at third order in dx
    grid = FourierGrid(3, 128, 24.0)
    s = k2_closed(params, SecondOrderInit.poisson(init1), init1, 2.0, grid)
    edges = np.array([1.0, 1.5, 2.0, 2.5])
    bins = analytic_pair_bins(params, 1.0, 2.0, 2.0, edges)
    r = grid.radius()
    for key, field in (("pp", s.k_pp), ("mm", s.k_mm)):
        space = field.constant + field.fluct_space()
        for j in range(3):
            shell = (r >= edges[j]) & (r < edges[j + 1])
            assert bins[key][j] == pytest.approx(space[shell].mean(), rel=1e-3)


PURE = gaussian_params(0.0, 0.0, 0.0, sigma=0.5)


def test_compare_pure_death_passes():
    cfg = SimConfig(5.0, t_end=2.0, snapshots=(0.0, 1.0, 2.0), replicas=40, bin_width=0.25, r_max=1.0)
    rep = compare_sim_analytic(PURE, FirstOrderInit(0.4, 0.8), cfg)
    assert rep.passed, rep.summary()
    assert all(math.isfinite(r.z) for r in rep.rows)
    assert "Bonferroni" in rep.bonferroni_note


def test_compare_detects_mismatched_rates():
    params = gaussian_params(0.5, 0.8, 0.5, sigma=0.5)
    cfg = SimConfig(5.0, t_end=2.0, snapshots=(1.0, 2.0), replicas=60)
    rep = compare_sim_analytic(params, FirstOrderInit(0.4, 1.0), cfg, pairs=False,
                               analytic_params=gaussian_params(0.5, 0.3, 0.5, sigma=0.5))
    assert not rep.passed and "FAIL" in rep.summary()


def test_compare_rejects_bad_inputs():
    cfg = SimConfig(5.0, replicas=1)
    with pytest.raises(ValueError, match="2 replicas"):
        compare_sim_analytic(PURE, FirstOrderInit(0.4, 0.8), cfg)
    g = FourierGrid(3, 16, 20.0)
    shifted = FirstOrderInit(0.4, 0.8, psi_plus=0.1 * np.exp(-g.radius() ** 2), grid=g)
    with pytest.raises(ValueError, match="translation"):
        compare_sim_analytic(PURE, shifted, SimConfig(5.0, replicas=4))


@pytest.mark.slow
def test_null_false_failure_rate():
    # 100 independent pure-death comparisons against the exact law: at most one may fail
    fails = 0
    for seed in range(100):
        cfg = SimConfig(4.0, t_end=1.0, snapshots=(0.5, 1.0), replicas=20, seed=seed, bin_width=0.5, r_max=1.0)
        fails += not compare_sim_analytic(PURE, FirstOrderInit(0.3, 0.6), cfg).passed
    assert fails <= 1
