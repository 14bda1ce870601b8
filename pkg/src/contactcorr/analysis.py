"""Numerical witnesses for the integrability lemmas, majorants, and the
simulation-versus-analytics comparison.

The lemma checks are witnesses on finite grids, not proofs: their reports say
"consistent with" a statement, never "verified".
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

from .evolution2 import (constant_terms, evaluate_terms, fill_origin, majorant_terms, terms_u_mm, terms_u_pm,
                         terms_u_pp, theorem_case)
from .model import FirstOrderInit, Kernel, ModelParams, SecondOrderInit
from .simulator import PAIR_KEYS, EstimateSeries, SimConfig, run_replicas, shell_volumes
from .spectral import FourierGrid, SymbolTable, build_symbols, phi1, symbols_at


# -- Lemma: integrability of b / (a_hat - 1) ------------------------------------


@dataclass(frozen=True)
class IntAReport:
    d: int
    lengths: tuple
    sums: tuple
    ratios: tuple
    verdict: str
    slope: float
    slope_ok: bool

    @property
    def message(self) -> str:
        if self.verdict == "converges":
            return f"lattice sums converge in d={self.d}: consistent with integrability of b/(a_hat-1)"
        if self.verdict == "diverges":
            return f"lattice sums diverge in d={self.d}: b/(a_hat-1) is not integrable here"
        return f"lattice sums inconclusive in d={self.d}"


def refinement_grids(d: int, n0: int = 16, length0: float = 20.0, levels: int = 4) -> list:
    """Grids with fixed spacing and doubling length, so the frequency step halves each level."""
    return [FourierGrid(d, n0 * 2**k, length0 * 2**k) for k in range(levels)]


def one_minus_a_slope(kernel: Kernel, p_lo: float = 1e-3, p_hi: float = 1e-1) -> float:
    """Log-log slope of ``1 - a_hat(p)`` against ``|p|`` near the origin."""
    p = np.geomspace(p_lo, p_hi, 40) / kernel.scale
    y = -np.expm1(np.log(np.clip(kernel.fourier(p), 1e-300, None)))
    return float(np.polyfit(np.log(p), np.log(y), 1)[0])


def check_lemma_int_a(kernel: Kernel, b_field: Callable, grid_sequence: Optional[Sequence[FourierGrid]] = None,
                      tol: float = 0.05) -> IntAReport:
    """Lattice sums ``sum_{p != 0} |b(p) / (a_hat(p) - 1)| dp^d`` over refining grids.

    ``b_field`` maps frequency magnitudes to values. The verdict is
    "converges" when the last relative change is below ``tol`` and
    "diverges" when the sums at least double per refinement.
    """
    grids = list(grid_sequence) if grid_sequence is not None else refinement_grids(kernel.d)
    if any(g.d != kernel.d for g in grids):
        raise ValueError("grid and kernel dimensions differ")
    sums = []
    for g in grids:
        p = g.p_norm().ravel()[1:]
        denom = -np.expm1(np.log(kernel.fourier(p)))
        sums.append(float(np.sum(np.abs(b_field(p) / denom)) * g.dp**g.d))
    ratios = tuple(b / a for a, b in zip(sums, sums[1:]))
    if ratios and abs(ratios[-1] - 1) < tol:
        verdict = "converges"
    elif ratios and all(r >= 2 - 1e-9 for r in ratios):
        verdict = "diverges"
    else:
        verdict = "inconclusive"
    slope = one_minus_a_slope(kernel)
    return IntAReport(kernel.d, tuple(g.length for g in grids), tuple(sums), ratios, verdict, slope,
                      abs(slope - 2) <= 0.1)


# -- Lemma: bound on phi1 ------------------------------------------------------------


@dataclass(frozen=True)
class BoundIntReport:
    cases: int
    negative: int
    bound_violations: int
    argmax_violations: int

    @property
    def passed(self) -> bool:
        return self.negative == 0 and self.bound_violations == 0 and self.argmax_violations == 0

    @property
    def message(self) -> str:
        if self.passed:
            return f"{self.cases} cases: 0 <= phi1(a,b,t) < -1/b everywhere, consistent with the bound lemma"
        return (f"{self.cases} cases: {self.negative} negative, {self.bound_violations} bound and "
                f"{self.argmax_violations} argmax violations")


def check_lemma_boundint(num_cases: int, rng: np.random.Generator, n_t: int = 2001,
                         chunk: int = 500) -> BoundIntReport:
    """Sweep random ``a, b < 0`` (``a != b``) over a dense grid on ``[0, 100 / max(|a|, |b|)]``.

    Both ``0 <= phi1(a, b, t)`` and ``phi1(a, b, t) < -1/b + 1e-12`` are checked;
    ``phi1`` is symmetric, so the bound with the roles swapped is the same
    check. The grid argmax must fall within one step of
    ``t0 = ln(a/b) / (b - a)``.
    """
    a = -10 ** rng.uniform(-2, 2, num_cases)
    b = -10 ** rng.uniform(-2, 2, num_cases)
    same = a == b
    b[same] = b[same] * 1.5
    neg = bound = arg = 0
    u = np.linspace(0.0, 1.0, n_t)
    for lo in range(0, num_cases, chunk):
        aa, bb = a[lo:lo + chunk, None], b[lo:lo + chunk, None]
        t_max = 100 / np.maximum(np.abs(aa), np.abs(bb))
        t = u[None, :] * t_max
        h = phi1(aa, bb, t)
        neg += int(np.sum(np.any(h < 0, axis=1)))
        bound += int(np.sum(np.any(h >= -1 / bb + 1e-12, axis=1)))
        t0 = np.log(aa / bb) / (bb - aa)
        step = t_max / (n_t - 1)
        t_arg = np.take_along_axis(t, np.argmax(h, axis=1)[:, None], axis=1)
        arg += int(np.sum(np.abs(t_arg - t0) > step * (1 + 1e-9)))
    return BoundIntReport(num_cases, neg, bound, arg)


def degenerate_sup(a: float) -> float:
    """``sup_t t e^{ta} = -e^{-1}/a`` for ``a < 0``, attained at ``t = -1/a``."""
    return -math.exp(-1) / a


# -- majorants ------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MajorantReport:
    case: int
    majorant: dict
    dominated: bool
    worst_ratio: float
    integrals: tuple
    stable: bool
    denominator_bound_ok: bool


def _fluct_terms(sym: SymbolTable, c_plus: float, c_minus: float, phi_mm=None, phi_pm=None) -> dict:
    return {"mm": terms_u_mm(sym, c_minus), "pm": terms_u_pm(sym, c_minus, phi_mm),
            "pp": terms_u_pp(sym, c_plus, c_minus, phi_mm, phi_pm)}


def majorant_fields(sym: SymbolTable, c_plus: float, c_minus: float) -> dict:
    """Time-uniform bounds ``M(p) >= |U_t(p)|`` for the three pair fluctuations."""
    return {k: majorant_terms(v) for k, v in _fluct_terms(sym, c_plus, c_minus).items()}


def build_majorant(symbols: SymbolTable, b_field=None, c_plus: float = 1.0, c_minus: float = 1.0,
                   times=(0.1, 1.0, 10.0, 100.0), grid: Optional[FourierGrid] = None) -> MajorantReport:
    """Majorants of the pair fluctuations, their domination check and lattice integrability.

    Every closed-form term is a divided difference of ``exp(t z)`` over
    nonpositive exponents, bounded uniformly in ``t`` by the reciprocal
    product of the largest ``|z|``. ``b_field`` (optional, one value per grid
    point) is added to the (--) majorant as the free initial fluctuation. The
    integrability check compares lattice integrals on ``(n, L)`` and
    ``(2n, 2L)``; the origin cell carries the fitted ``A / |p|^2`` pole so
    that the sums are not biased by the excluded singular point.
    """
    params = symbols.params
    case = theorem_case(params)
    if case is None:
        raise ValueError("majorants need a stable case: lambda+ = 1 > lambda- or lambda- = 1 > lambda+")
    maj = majorant_fields(symbols, c_plus, c_minus)
    if b_field is not None:
        maj["mm"] = maj["mm"] + np.abs(b_field)
    worst = 0.0
    for t in times:
        vals = {k: evaluate_terms(v, t) for k, v in _fluct_terms(symbols, c_plus, c_minus).items()}
        if b_field is not None:
            vals["mm"] = vals["mm"] + np.exp(2 * t * symbols.f_minus) * b_field
        for k in PAIR_KEYS:
            m = np.asarray(maj[k])
            ok = m > 0
            r = np.abs(vals[k])[ok] / m[ok]
            worst = max(worst, float(r.max()) if r.size else 0.0)
            if np.any(np.abs(vals[k])[~ok] > 0):
                worst = math.inf

    integrals = ()
    stable = True
    if grid is not None:
        sums = []
        for g in (grid, FourierGrid(grid.d, 2 * grid.n, 2 * grid.length)):
            m = majorant_fields(build_symbols(params, g), c_plus, c_minus)
            sums.append({k: float(np.sum(fill_origin(np.asarray(m[k]), g)) * g.dp**g.d) for k in PAIR_KEYS})
        integrals = tuple(sums)
        stable = all(abs(sums[1][k] / sums[0][k] - 1) < 0.05 for k in PAIR_KEYS if sums[0][k] > 0)

    # case 2 denominator estimate: (mu- - f- - f+)(mu- - 2 f-) >= -2 mu+ (1 - a-)
    if case == 2:
        lhs = (symbols.mu_minus - symbols.f_minus - symbols.f_plus) * (symbols.mu_minus - 2 * symbols.f_minus)
        rhs = -2 * symbols.mu_plus * (1 - symbols.a_minus)
        den_ok = bool(np.all(lhs >= rhs - 1e-12 * np.abs(rhs)))
    else:
        lhs = (symbols.mu_plus - 2 * symbols.f_plus)
        den_ok = bool(np.all(lhs >= -1e-12))
    return MajorantReport(case, maj, worst <= 1 + 1e-12, worst, integrals, stable, den_ok)


# -- simulation versus analytics --------------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    time: float
    observable: str
    r: float
    analytic: float
    mc_mean: float
    se: float
    z: float


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    rows: tuple
    threshold: float
    status: str = "ok"

    @property
    def max_abs_z(self) -> float:
        return max((abs(r.z) for r in self.rows), default=0.0)

    @property
    def passed(self) -> bool:
        return self.status == "ok" and all(abs(r.z) <= self.threshold for r in self.rows)

    @property
    def bonferroni_note(self) -> str:
        m = len(self.rows)
        alpha = m * math.erfc(self.threshold / math.sqrt(2))
        return (f"{m} comparisons at |z| <= {self.threshold:g}: family-wise false-failure "
                f"probability under the null is at most {min(alpha, 1.0):.2g} (Bonferroni)")

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        lines = [f"{verdict}: max |z| = {self.max_abs_z:.3f} over {len(self.rows)} comparisons",
                 self.bonferroni_note]
        if self.status != "ok":
            lines.append(f"status: {self.status}")
        bad = [r for r in self.rows if abs(r.z) > self.threshold]
        for r in bad[:10]:
            lines.append(f"  t={r.time:g} {r.observable} r={r.r:g}: analytic {r.analytic:.6g}, "
                         f"MC {r.mc_mean:.6g} +- {r.se:.3g} (z={r.z:.2f})")
        return "\n".join(lines)


@functools.lru_cache(maxsize=4)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _radial_nodes(params: ModelParams, n_nodes: int = 1500):
    """Gauss-Legendre nodes on ``[0, q_max]`` beyond which every kernel transform is negligible."""
    smallest = min(k.scale for k in params.kernels.values())
    q_max = 12.0 / smallest
    for k in params.kernels.values():
        if k.family == "tent":
            q_max = max(q_max, 400.0 / k.scale)
    x, w = _leggauss(n_nodes)
    return 0.5 * q_max * (x + 1), 0.5 * q_max * w


def shell_average_weights(q: np.ndarray, edges: np.ndarray, d: int) -> np.ndarray:
    """Matrix ``W[bin, node]`` such that the shell average of ``f`` is ``W @ f_hat(q) * w``.

    Uses closed-form radial integrals of the Hankel kernels, so the bin
    average is exact up to the frequency quadrature.
    """
    r1, r2 = edges[:-1, None], edges[1:, None]
    qq = q[None, :]
    if d == 1:
        return (np.sin(qq * r2) - np.sin(qq * r1)) / (qq * (r2 - r1)) / math.pi
    if d == 2:
        g = lambda r: r * special.j1(qq * r) / qq
        return (g(r2) - g(r1)) * 2 / (r2**2 - r1**2) * qq / (2 * math.pi)
    g = lambda r: (np.sin(qq * r) - qq * r * np.cos(qq * r)) / qq**3
    return (g(r2) - g(r1)) * 3 / (r2**3 - r1**3) * qq**2 / (2 * math.pi**2)


def analytic_pair_bins(params: ModelParams, c_plus: float, c_minus: float, t: float,
                       edges: np.ndarray) -> dict:
    """Shell averages of ``k^{++}, k^{+-}, k^{--}`` at time ``t`` from Poisson initial data."""
    init2 = SecondOrderInit.poisson(FirstOrderInit(c_plus, c_minus))
    cons = {k: float(evaluate_terms(v, t)) for k, v in constant_terms(params, init2, c_plus, c_minus).items()}
    q, w = _radial_nodes(params)
    sym = symbols_at(params, q)
    W = shell_average_weights(q, edges, params.d) * w[None, :]
    out = {}
    for k, terms in _fluct_terms(sym, c_plus, c_minus).items():
        out[k] = cons[k] + W @ np.asarray(evaluate_terms(terms, t), dtype=float)
    return out


def analytic_densities(params: ModelParams, c_plus: float, c_minus: float, t: float) -> tuple:
    init2 = SecondOrderInit.poisson(FirstOrderInit(c_plus, c_minus))
    cons = constant_terms(params, init2, c_plus, c_minus)
    return float(evaluate_terms(cons["plus"], t)), float(evaluate_terms(cons["minus"], t))


def _z(analytic: float, mean: float, se: float, floor: float) -> float:
    diff = float(mean) - float(analytic)
    if diff == 0:
        return 0.0
    return diff / max(float(se), float(floor))


def _null_se(analytic: float, norm: float, replicas: int, multiplicity: int = 1) -> float:
    """Standard error of a replica mean of ``count / norm`` if counts are Poisson under the analytic law.

    Same-type ordered pairs come in twos (``multiplicity=2``), doubling the variance.
    Sample standard errors collapse in sparse bins, so this floors them.
    """
    return math.sqrt(multiplicity * max(analytic, 0.0) * norm / replicas) / norm


def compare_sim_analytic(params: ModelParams, init: FirstOrderInit, simcfg: SimConfig,
                         threshold: float = 4.0, estimates: Optional[EstimateSeries] = None,
                         analytic_params: Optional[ModelParams] = None,
                         pairs: bool = True) -> ComparisonReport:
    """z-scores of Monte Carlo densities and pair bins against the spectral engine.

    ``analytic_params`` overrides the parameters on the analytic side (used
    for negative controls). A zero standard error is floored at the
    resolution of one particle per replica set so that z stays finite, and
    every standard error is floored at its Poisson value under the analytic
    law, since sample errors underestimate the spread of sparse counts.
    """
    if simcfg.replicas < 2:
        raise ValueError("comparison needs at least 2 replicas")
    if not init.translation_invariant:
        raise ValueError("comparison needs translation-invariant Poisson initial data")
    simcfg = SimConfig(**{**simcfg.__dict__, "c_plus": init.c_plus, "c_minus": init.c_minus})
    est = estimates if estimates is not None else run_replicas(params, simcfg, record_pairs=pairs)
    ap = analytic_params if analytic_params is not None else params
    floor = 1.0 / (simcfg.volume * simcfg.replicas)
    centers = est.bin_centers
    rows = []
    for i, t in enumerate(est.times):
        kp, km = analytic_densities(ap, init.c_plus, init.c_minus, t)
        for name, a, m, s in (("density_plus", kp, est.density_plus[i], est.density_plus_se[i]),
                              ("density_minus", km, est.density_minus[i], est.density_minus_se[i])):
            if np.isfinite(m):
                s = max(float(s), _null_se(a, simcfg.volume, est.replicas))
                rows.append(ComparisonRow(float(t), name, math.nan, a, float(m), s, _z(a, m, s, floor)))
        if not pairs:
            continue
        bins = analytic_pair_bins(ap, init.c_plus, init.c_minus, t, est.bin_edges)
        shells = shell_volumes(est.bin_edges, simcfg.d)
        shell_floor = floor / shells
        for k in PAIR_KEYS:
            for j, r in enumerate(centers):
                m, s = est.pair[k][i, j], est.pair_se[k][i, j]
                if not np.isfinite(m):
                    continue
                if not np.isfinite(s):
                    s = 0.0
                a = float(bins[k][j])
                s = max(float(s), _null_se(a, simcfg.volume * shells[j], est.replicas, 1 if k == "pm" else 2))
                rows.append(ComparisonRow(float(t), f"k_{k}", float(r), a, float(m), s,
                                          _z(a, float(m), s, shell_floor[j])))
    return ComparisonReport(tuple(rows), threshold, est.status)
