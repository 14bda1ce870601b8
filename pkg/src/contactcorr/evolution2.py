"""Second-order correlation functions in the translation-invariant regime.

With ``psi = 0`` every pair function depends on the difference variable only
and splits into ``C(t) + F(r)``. Per frequency the system is::

    C--' = 2 mu- C--                    F--' = 2 f- F-- + 2 lam- a-_hat C-
    C+-' = (mu+ + mu-) C+- + lam C--    F+-' = (f+ + f-) F+- + lam a_hat (C- + F--)
    C++' = 2 mu+ C++ + 2 lam C+-        F++' = 2 f+ F++ + 2 lam+ a+_hat C+ + 2 lam a_hat F+-

A constant convolved with a normalised kernel stays in the constant channel;
``a(x - y)`` times a constant is an integrable source.

Each solution is a sum of terms ``coef * expdd(t, z0, z1, ...)``; the same
term lists drive the closed form, the time-uniform majorant and the
quadrature oracle in the tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .evolution1 import AsymptoticVerdict, FirstOrderState, _resolve_grid, initial_state, is_one, rk4
from .model import FirstOrderInit, ModelParams, SecondOrderInit
from .spectral import FourierGrid, SplitField, SymbolTable, build_symbols, expdd, expdd_bound, \
    inverse_transform, radial_inverse_transform, symbols_at


@dataclass(frozen=True, eq=False)
class SecondOrderState:
    k_mm: SplitField
    k_pm: SplitField
    k_pp: SplitField
    t: float = 0.0
    method: str = "closed"


# -- term lists ---------------------------------------------------------------


def terms_u_mm(sym: SymbolTable, c_minus: float) -> list:
    lm = sym.params.lambda_minus
    return [(2 * lm * c_minus * sym.a_minus, (sym.mu_minus, 2 * sym.f_minus))]


def terms_u_pm(sym: SymbolTable, c_minus: float, phi_mm_hat=None) -> list:
    lam, lm = sym.params.lambda_cross, sym.params.lambda_minus
    h3, fm2 = sym.h3, 2 * sym.f_minus
    out = [(lam * sym.a_cross * c_minus, (h3, sym.mu_minus)),
           (2 * lam * lm * c_minus * sym.a_cross * sym.a_minus, (h3, sym.mu_minus, fm2))]
    if phi_mm_hat is not None:
        out.append((lam * sym.a_cross * phi_mm_hat, (h3, fm2)))
    return out


def terms_u_pp(sym: SymbolTable, c_plus: float, c_minus: float, phi_mm_hat=None, phi_pm_hat=None) -> list:
    lam, lp = sym.params.lambda_cross, sym.params.lambda_plus
    fp2 = 2 * sym.f_plus
    out = [(2 * lp * c_plus * sym.a_plus, (fp2, sym.mu_plus)),
           (2 * lp * lam * c_minus * sym.a_plus, (fp2, sym.mu_minus, sym.mu_plus))]
    if phi_pm_hat is not None:
        out.append((2 * lam * sym.a_cross * phi_pm_hat, (fp2, sym.h3)))
    for coef, z in terms_u_pm(sym, c_minus, phi_mm_hat):
        out.append((2 * lam * sym.a_cross * coef, (fp2,) + z))
    return out


def evaluate_terms(terms: list, t: float):
    total = 0.0
    for coef, z in terms:
        total = total + coef * expdd(t, *z)
    return total


def majorant_terms(terms: list):
    """Sum of ``|coef| * sup_t expdd``; valid when all exponents are nonpositive."""
    total = 0.0
    for coef, z in terms:
        total = total + np.abs(coef) * expdd_bound(*z)
    return total


def u_hat_mm(symbols: SymbolTable, c_minus: float, t: float):
    return evaluate_terms(terms_u_mm(symbols, c_minus), t)


def u_hat_pm(symbols: SymbolTable, c_minus: float, t: float, phi_mm_hat=None):
    return evaluate_terms(terms_u_pm(symbols, c_minus, phi_mm_hat), t)


def u_hat_pp(symbols: SymbolTable, c_plus: float, c_minus: float, t: float, phi_mm_hat=None,
             phi_pm_hat=None):
    return evaluate_terms(terms_u_pp(symbols, c_plus, c_minus, phi_mm_hat, phi_pm_hat), t)


def constant_terms(params: ModelParams, init2: SecondOrderInit, c_plus: float, c_minus: float) -> dict:
    mp, mm, lam = params.mu_plus, params.mu_minus, params.lambda_cross
    return {
        "minus": [(c_minus, (mm,))],
        "plus": [(c_plus, (mp,)), (lam * c_minus, (mp, mm))],
        "mm": [(init2.c_mm, (2 * mm,))],
        "pm": [(init2.c_pm, (mp + mm,)), (lam * init2.c_mm, (mp + mm, 2 * mm))],
        "pp": [(init2.c_pp, (2 * mp,)), (2 * lam * init2.c_pm, (2 * mp, mp + mm)),
               (2 * lam**2 * init2.c_mm, (2 * mp, mp + mm, 2 * mm))],
    }


def constants_explicit(params: ModelParams, init2: SecondOrderInit, t: float) -> tuple:
    """Pair-function constants in the three-exponential form (needs ``lambda_plus != lambda_minus``)."""
    mp, mm, lam = params.mu_plus, params.mu_minus, params.lambda_cross
    dmu = mm - mp
    c_mm = init2.c_mm * math.exp(2 * mm * t)
    c_pm = (init2.c_pm - lam * init2.c_mm / dmu) * math.exp((mp + mm) * t) \
        + lam * init2.c_mm / dmu * math.exp(2 * mm * t)
    c_pp = (init2.c_pp - 2 * lam * init2.c_pm / dmu + lam**2 * init2.c_mm / dmu**2) * math.exp(2 * mp * t) \
        + (2 * lam * init2.c_pm / dmu - 2 * lam**2 * init2.c_mm / dmu**2) * math.exp((mp + mm) * t) \
        + lam**2 * init2.c_mm / dmu**2 * math.exp(2 * mm * t)
    return c_mm, c_pm, c_pp


# -- closed form ----------------------------------------------------------------


def _require_translation_invariant(init1: FirstOrderInit, init2: SecondOrderInit):
    if not init1.translation_invariant:
        raise ValueError("second-order dynamics need translation-invariant first-order data (psi = 0)")


def _phi_hats(init2: SecondOrderInit, grid: FourierGrid) -> tuple:
    return tuple(SplitField.from_space(0.0, f, grid).fluct_hat if f is not None else None
                 for f in (init2.phi_mm, init2.phi_pm, init2.phi_pp))


def k2_closed(params: ModelParams, init2: SecondOrderInit, init1: FirstOrderInit, t: float,
              grid: Optional[FourierGrid] = None, ode_dt: float = 1e-3) -> SecondOrderState:
    """Pair functions at time ``t``.

    Equal rates ``lambda_plus == lambda_minus`` are delegated to the RK4
    oracle and the result is marked ``method="oracle"``.
    """
    _require_translation_invariant(init1, init2)
    if t < 0:
        raise ValueError("t must be nonnegative")
    grid = _resolve_grid(params, init2, grid)
    if math.isclose(params.lambda_plus, params.lambda_minus, rel_tol=0, abs_tol=1e-12):
        return evolve2_ode(params, init2, init1, t, ode_dt, grid)
    sym = build_symbols(params, grid)
    phi_mm, phi_pm, phi_pp = _phi_hats(init2, grid)
    cons = {k: float(evaluate_terms(v, t)) for k, v in
            constant_terms(params, init2, init1.c_plus, init1.c_minus).items()}
    c_p, c_m = init1.c_plus, init1.c_minus

    f_mm = u_hat_mm(sym, c_m, t)
    f_pm = u_hat_pm(sym, c_m, t, phi_mm)
    f_pp = u_hat_pp(sym, c_p, c_m, t, phi_mm, phi_pm)
    if phi_mm is not None:
        f_mm = f_mm + np.exp(2 * t * sym.f_minus) * phi_mm
    if phi_pm is not None:
        f_pm = f_pm + np.exp(t * sym.h3) * phi_pm
    if phi_pp is not None:
        f_pp = f_pp + np.exp(2 * t * sym.f_plus) * phi_pp
    return SecondOrderState(SplitField(cons["mm"], f_mm, grid), SplitField(cons["pm"], f_pm, grid),
                            SplitField(cons["pp"], f_pp, grid), float(t), "closed")


def first_order_translation_invariant(params: ModelParams, init1: FirstOrderInit, t: float,
                                      grid: FourierGrid) -> FirstOrderState:
    mp, mm, lam = params.mu_plus, params.mu_minus, params.lambda_cross
    cm = init1.c_minus * math.exp(mm * t)
    cp = float(evaluate_terms([(init1.c_plus, (mp,)), (lam * init1.c_minus, (mp, mm))], t))
    return FirstOrderState(SplitField.constant_only(cm, grid), SplitField.constant_only(cp, grid), t)


# -- ODE oracle -------------------------------------------------------------------


def second_order_rhs(symbols: SymbolTable, state2: SecondOrderState, state1: FirstOrderState) -> SecondOrderState:
    """Time derivatives of the pair functions (translation-invariant states)."""
    p = symbols.params
    lam, lp, lm = p.lambda_cross, p.lambda_plus, p.lambda_minus
    mm_, pm_, pp_ = state2.k_mm, state2.k_pm, state2.k_pp
    cm, cp = state1.k_minus.constant, state1.k_plus.constant
    g = mm_.grid
    d_mm = SplitField(2 * p.mu_minus * mm_.constant,
                      2 * symbols.f_minus * mm_.fluct_hat + 2 * lm * symbols.a_minus * cm, g)
    d_pm = SplitField((p.mu_plus + p.mu_minus) * pm_.constant + lam * mm_.constant,
                      symbols.h3 * pm_.fluct_hat + lam * symbols.a_cross * (cm + mm_.fluct_hat), g)
    d_pp = SplitField(2 * p.mu_plus * pp_.constant + 2 * lam * pm_.constant,
                      2 * symbols.f_plus * pp_.fluct_hat + 2 * lp * symbols.a_plus * cp
                      + 2 * lam * symbols.a_cross * pm_.fluct_hat, g)
    return SecondOrderState(d_mm, d_pm, d_pp, state2.t, state2.method)


class _PackedSystem:
    """Coupled first/second-order right-hand side on stacked arrays.

    Rows of the fluctuation stack are ``(F-, F+, F--, F+-, F++)``; constants
    use the same order. Coefficients are precomputed once per run.
    """

    def __init__(self, sym: SymbolTable):
        p = sym.params
        lam, lp, lm = p.lambda_cross, p.lambda_plus, p.lambda_minus
        self.mu_p, self.mu_m, self.lam = p.mu_plus, p.mu_minus, lam
        self.fm, self.fp = sym.f_minus, sym.f_plus
        self.fm2, self.fp2, self.h3 = 2 * sym.f_minus, 2 * sym.f_plus, sym.h3
        self.lam_a = lam * sym.a_cross
        self.src_mm = 2 * lm * sym.a_minus
        self.src_pp = 2 * lp * sym.a_plus

    def __call__(self, y):
        c, f = y
        dc = np.array([self.mu_m * c[0],
                       self.mu_p * c[1] + self.lam * c[0],
                       2 * self.mu_m * c[2],
                       (self.mu_p + self.mu_m) * c[3] + self.lam * c[2],
                       2 * self.mu_p * c[4] + 2 * self.lam * c[3]])
        df = np.empty_like(f)
        df[0] = self.fm * f[0]
        df[1] = self.fp * f[1] + self.lam_a * f[0]
        df[2] = self.fm2 * f[2] + self.src_mm * c[0]
        df[3] = self.h3 * f[3] + self.lam_a * (c[0] + f[2])
        df[4] = self.fp2 * f[4] + self.src_pp * c[1] + 2 * self.lam_a * f[3]
        return dc, df


def _combine_packed(y, incs):
    c, f = y
    c, f = c.copy(), f.copy()
    for w, (dc, df) in incs:
        c += w * dc
        f += w * df
    return c, f


def evolve2_ode(params: ModelParams, init2: SecondOrderInit, init1: FirstOrderInit, t_end: float,
                dt: float = 1e-3, grid: Optional[FourierGrid] = None, snapshots=()):
    """RK4 integration of the coupled first- and second-order equations.

    Returns the ``SecondOrderState`` at ``t_end`` (``method="oracle"``); with
    ``snapshots`` returns ``(final, {t: state})``.
    """
    _require_translation_invariant(init1, init2)
    grid = _resolve_grid(params, init2, grid)
    sym = build_symbols(params, grid)
    rate = 2 * max(np.max(np.abs(sym.f_plus)), np.max(np.abs(sym.f_minus)))
    if dt * rate >= 0.5:
        raise ValueError(f"stability guard: dt * max rate = {dt * rate:.3g} >= 0.5")
    s1 = initial_state(init1, grid)
    phis = _phi_hats(init2, grid)
    c0 = np.array([init1.c_minus, init1.c_plus, init2.c_mm, init2.c_pm, init2.c_pp], dtype=float)
    if all(h is None for h in phis):
        # all fields are functions of |p| alone: integrate on the distinct shells only
        shells, inverse = np.unique(sym.p, return_inverse=True)
        sym = symbols_at(params, shells)
        f0 = np.zeros((5,) + shells.shape)
        expand = lambda f: f[inverse].reshape(grid.shape)
    else:
        zeros = np.zeros(grid.shape)
        f0 = np.stack([s1.k_minus.fluct_hat, s1.k_plus.fluct_hat]
                      + [h if h is not None else zeros for h in phis])
        expand = lambda f: f

    def unpack(y, t):
        c, f = y
        return SecondOrderState(SplitField(float(c[2]), expand(f[2]), grid),
                                SplitField(float(c[3]), expand(f[3]), grid),
                                SplitField(float(c[4]), expand(f[4]), grid), float(t), "oracle")

    if t_end == 0:
        return (unpack((c0, f0), 0.0), {}) if snapshots else unpack((c0, f0), 0.0)
    final, snaps = rk4(_PackedSystem(sym), (c0, f0), 0.0, t_end, dt, _combine_packed, snapshots)
    if snapshots:
        return unpack(final, t_end), {t: unpack(v, t) for t, v in snaps.items()}
    return unpack(final, t_end)


# -- asymptotics --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LimitSpectra:
    """Limit fluctuation spectra on the grid; entries not applicable to the case are ``None``.

    ``p = 0`` holds the cell average of the ``A / |p|^2`` pole, with ``A``
    extrapolated from the first frequency shell (see :func:`fill_origin`).
    """

    grid: FourierGrid
    omega_pp: Optional[np.ndarray] = None
    xi_mm: Optional[np.ndarray] = None
    xi_pm: Optional[np.ndarray] = None
    xi_pp: Optional[np.ndarray] = None

    def space(self, name: str) -> Optional[np.ndarray]:
        spec = getattr(self, name)
        return None if spec is None else inverse_transform(self.grid, spec).real

    def radial_profile(self, name: str) -> Optional[tuple]:
        f = self.space(name)
        if f is None:
            return None
        m = self.grid.n // 2 + 1
        return np.arange(m) * self.grid.dx, f[(slice(0, m),) + (0,) * (self.grid.d - 1)].copy()


@dataclass(frozen=True, eq=False)
class SecondOrderLimits:
    case: int
    k_mm: AsymptoticVerdict
    k_pm: AsymptoticVerdict
    k_pp: AsymptoticVerdict
    spectra: LimitSpectra


def theorem_case(params: ModelParams) -> Optional[int]:
    """1 for ``lambda+ = 1 > lambda- > 0``, 2 for ``lambda- = 1 > lambda+ > 0``, else ``None``."""
    lp, lm = params.lambda_plus, params.lambda_minus
    if is_one(lp) and 0 < lm < 1 and not is_one(lm):
        return 1
    if is_one(lm) and 0 < lp < 1 and not is_one(lp):
        return 2
    return None


def omega_pp_spectrum(sym: SymbolTable, c_plus: float, c_minus: float, as_printed: bool = False):
    """Case-1 limit spectrum of the ``++`` fluctuation.

    The derived limit is ``C+ a+_hat / (1 - a+_hat)`` with the first-order limit
    ``C+ = c+ + lam c- / (1 - lam-)``; ``as_printed`` gives the alternative form
    ``(lam- + lam - 1)/(lam- - 1) * c+ a+_hat / (1 - a+_hat)``.
    """
    lm, lam = sym.params.lambda_minus, sym.params.lambda_cross
    ap = sym.a_plus
    with np.errstate(divide="ignore", invalid="ignore"):
        if as_printed:
            return (lm + lam - 1) / (lm - 1) * c_plus * ap / (1 - ap)
        return (c_plus + lam * c_minus / (1 - lm)) * ap / (1 - ap)


def xi_mm_spectrum(sym: SymbolTable, c_minus: float):
    am = sym.a_minus
    with np.errstate(divide="ignore", invalid="ignore"):
        return c_minus * am / (1 - am)


def xi_pm_spectrum(sym: SymbolTable, c_minus: float):
    lp, lam = sym.params.lambda_plus, sym.params.lambda_cross
    mm = sym.mu_minus
    am, ap, a = sym.a_minus, sym.a_plus, sym.a_cross
    with np.errstate(divide="ignore", invalid="ignore"):
        return 0.5 * (mm + 2) / (2 - lp * ap - am) * c_minus * lam * a / (1 - am)


def xi_pp_spectrum(sym: SymbolTable, c_minus: float, as_printed: bool = False):
    """Case-2 limit spectrum of the ``++`` fluctuation.

    The limit of the closed form has ``2 - lam+ a+_hat - a-_hat`` in the inner
    denominator; ``as_printed`` substitutes ``a+_hat`` for ``a-_hat`` there.
    """
    lp, lam = sym.params.lambda_plus, sym.params.lambda_cross
    am, ap, a = sym.a_minus, sym.a_plus, sym.a_cross
    inner = ap if as_printed else am
    with np.errstate(divide="ignore", invalid="ignore"):
        return lam / (1 - lp * ap) * (lp * c_minus * ap / (1 - lp)
                                      + lam * c_minus / (2 - lp * ap - inner) * a**2 / (1 - am))


# Constant of the zero-mode-free periodic Coulomb sum on a simple cubic lattice:
# (1/L^3) sum_{p != 0} e^{ipx} / |p|^2 = 1/(4 pi r) - XI_SC / (4 pi L) + O(r^2 / L^3).
XI_SC = 2.837297479480620


def fill_origin(spec: np.ndarray, grid: FourierGrid) -> np.ndarray:
    """Replace the ``p = 0`` entry of a spectrum with an ``A / |p|^2`` pole.

    ``A`` comes from the nearest frequency shell. In d = 3 the filled value
    cancels the periodic offset of the lattice sum, so the inverse transform
    reproduces the continuum ``A / (4 pi r)`` tail up to ``O(r^2 / L^3)``.
    For a bounded spectrum (no pole) the shell mean is used instead.
    """
    out = np.array(spec, dtype=float, copy=True)
    p = grid.p_norm()
    flat_p, flat = p.ravel(), out.ravel()
    shell = np.isclose(flat_p, grid.dp)
    second = np.isclose(flat_p, 2 * grid.dp)
    a1 = np.mean(flat[shell]) * grid.dp**2
    a2 = np.mean(flat[second]) * (2 * grid.dp) ** 2
    if grid.d == 3 and abs(a2) > 0 and abs(a1 / a2 - 1) < 0.5:
        flat[0] = XI_SC * a1 * grid.length**2 / (4 * math.pi)
    else:
        flat[0] = np.mean(flat[shell])
    return out


def limits_second(params: ModelParams, init2: SecondOrderInit, init1: FirstOrderInit,
                  grid: Optional[FourierGrid] = None, a1_as_printed: bool = False,
                  a4_as_printed: bool = False) -> SecondOrderLimits:
    """Verdicts and limit spectra for the two stable cases of the (+) system."""
    _require_translation_invariant(init1, init2)
    case = theorem_case(params)
    if case is None:
        raise ValueError("case not covered by Theorem 3: need lambda+ = 1 > lambda- or lambda- = 1 > lambda+")
    grid = _resolve_grid(params, init2, grid)
    sym = build_symbols(params, grid)
    lam, lm, lp = params.lambda_cross, params.lambda_minus, params.lambda_plus
    c_p, c_m = init1.c_plus, init1.c_minus
    if case == 1:
        const = init2.c_pp - 2 * lam * init2.c_pm / (lm - 1) + lam**2 * init2.c_mm / (lm - 1) ** 2
        om = fill_origin(omega_pp_spectrum(sym, c_p, c_m, a1_as_printed), grid)
        spectra = LimitSpectra(grid, omega_pp=om)
        return SecondOrderLimits(1, AsymptoticVerdict("zero", 0.0), AsymptoticVerdict("zero", 0.0),
                                 AsymptoticVerdict("finite", const, om), spectra)
    xm = fill_origin(xi_mm_spectrum(sym, c_m), grid)
    xpm = fill_origin(xi_pm_spectrum(sym, c_m), grid)
    xpp = fill_origin(xi_pp_spectrum(sym, c_m, a4_as_printed), grid)
    spectra = LimitSpectra(grid, xi_mm=xm, xi_pm=xpm, xi_pp=xpp)
    return SecondOrderLimits(
        2,
        AsymptoticVerdict("finite", init2.c_mm, xm),
        AsymptoticVerdict("finite", lam * init2.c_mm / (1 - lp), xpm),
        AsymptoticVerdict("finite", lam**2 * init2.c_mm / (1 - lp) ** 2, xpp),
        spectra,
    )


def limit_spectrum_function(params: ModelParams, name: str, c_plus: float, c_minus: float):
    """Radial spectrum ``|p| -> value`` for use with :func:`radial_inverse_transform`."""

    def spec(q):
        sym = symbols_at(params, np.array([q]))
        if name == "omega_pp":
            return omega_pp_spectrum(sym, c_plus, c_minus)[0]
        if name == "xi_mm":
            return xi_mm_spectrum(sym, c_minus)[0]
        if name == "xi_pm":
            return xi_pm_spectrum(sym, c_minus)[0]
        return xi_pp_spectrum(sym, c_minus)[0]

    return spec


def radial_limit_profile(params: ModelParams, name: str, c_plus: float, c_minus: float, r) -> np.ndarray:
    return radial_inverse_transform(limit_spectrum_function(params, name, c_plus, c_minus), r, params.d)


# -- Ursell functions -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class UrsellFunctions:
    u_pp: SplitField
    u_pm: SplitField
    u_mm: SplitField
    t: float


def ursell(state2: SecondOrderState, state1: FirstOrderState, atol: float = 1e-12) -> UrsellFunctions:
    """Centred pair functions ``k++ - (k+)^2`` etc. for translation-invariant states."""
    if not math.isclose(state2.t, state1.t, rel_tol=0, abs_tol=atol):
        raise ValueError(f"states at different times: {state2.t} vs {state1.t}")
    cp, cm = state1.k_plus.constant, state1.k_minus.constant

    def centred(f: SplitField, c: float) -> SplitField:
        return SplitField(f.constant - c, f.fluct_hat, f.grid)

    return UrsellFunctions(centred(state2.k_pp, cp * cp), centred(state2.k_pm, cp * cm),
                           centred(state2.k_mm, cm * cm), state2.t)
