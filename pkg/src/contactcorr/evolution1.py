"""First-order correlation functions (particle intensities).

In Fourier space the intensities obey, per frequency ``p``::

    d/dt k-(p) = f-(p) k-(p)
    d/dt k+(p) = f+(p) k+(p) + lam a_hat(p) k-(p)

with ``f(p) = lam a_hat(p) - 1``. The constant parts evolve with the same
equations at ``p = 0`` (``a_hat(0) = 1``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import FirstOrderInit, ModelParams
from .spectral import FourierGrid, SplitField, SymbolTable, build_symbols, default_grid, phi1


@dataclass(frozen=True, eq=False)
class FirstOrderState:
    k_minus: SplitField
    k_plus: SplitField
    t: float = 0.0


@dataclass(frozen=True, eq=False)
class AsymptoticVerdict:
    """Long-time behaviour of one correlation function.

    ``kind`` is ``"zero"``, ``"finite"`` or ``"diverges"``. Finite verdicts
    carry the limit constant; ``fluctuation`` is the limit of the integrable
    part on the grid (``None`` means identically zero).
    """

    kind: str
    constant: Optional[float] = None
    fluctuation: Optional[np.ndarray] = None
    rate: Optional[str] = None

    def __str__(self):
        if self.kind == "finite":
            return f"Finite({self.constant:.12g})"
        if self.kind == "diverges" and self.rate:
            return f"Diverges({self.rate})"
        return self.kind.capitalize()


def _resolve_grid(params: ModelParams, init, grid: Optional[FourierGrid]) -> FourierGrid:
    if grid is not None:
        return grid
    if getattr(init, "grid", None) is not None:
        return init.grid
    return default_grid(params)


def initial_state(init: FirstOrderInit, grid: FourierGrid) -> FirstOrderState:
    return FirstOrderState(SplitField.from_space(init.c_minus, init.psi_minus, grid),
                           SplitField.from_space(init.c_plus, init.psi_plus, grid), 0.0)


def k_minus_closed(params: ModelParams, init: FirstOrderInit, t: float,
                   grid: Optional[FourierGrid] = None) -> SplitField:
    grid = _resolve_grid(params, init, grid)
    sym = build_symbols(params, grid)
    psi_hat = initial_state(init, grid).k_minus.fluct_hat
    return SplitField(init.c_minus * math.exp(params.mu_minus * t), np.exp(t * sym.f_minus) * psi_hat, grid)


def u_hat_first(symbols: SymbolTable, psi_minus_hat, t: float) -> np.ndarray:
    """Transform of the (+) fluctuation fed by the (-) fluctuation."""
    lam = symbols.params.lambda_cross
    return lam * symbols.a_cross * psi_minus_hat * phi1(symbols.f_minus, symbols.f_plus, t)


def k_plus_closed(params: ModelParams, init: FirstOrderInit, t: float,
                  grid: Optional[FourierGrid] = None) -> SplitField:
    grid = _resolve_grid(params, init, grid)
    sym = build_symbols(params, grid)
    s0 = initial_state(init, grid)
    lam = params.lambda_cross
    const = init.c_plus * math.exp(params.mu_plus * t) + lam * init.c_minus * phi1(
        params.mu_minus, params.mu_plus, t)
    fluct = np.exp(t * sym.f_plus) * s0.k_plus.fluct_hat
    if np.any(s0.k_minus.fluct_hat):
        fluct = fluct + u_hat_first(sym, s0.k_minus.fluct_hat, t)
    return SplitField(float(const), fluct, grid)


def first_order_closed(params: ModelParams, init: FirstOrderInit, t: float,
                       grid: Optional[FourierGrid] = None) -> FirstOrderState:
    return FirstOrderState(k_minus_closed(params, init, t, grid), k_plus_closed(params, init, t, grid), t)


def first_order_rhs(symbols: SymbolTable, state: FirstOrderState) -> FirstOrderState:
    """Time derivative of a first-order state (returned in state form, same ``t``)."""
    p = symbols.params
    km, kp = state.k_minus, state.k_plus
    dm = SplitField(p.mu_minus * km.constant, symbols.f_minus * km.fluct_hat, km.grid)
    dp = SplitField(p.mu_plus * kp.constant + p.lambda_cross * km.constant,
                    symbols.f_plus * kp.fluct_hat + p.lambda_cross * symbols.a_cross * km.fluct_hat,
                    kp.grid)
    return FirstOrderState(dm, dp, state.t)


def _max_rate(symbols: SymbolTable) -> float:
    return float(max(np.max(np.abs(symbols.f_plus)), np.max(np.abs(symbols.f_minus)),
                     abs(symbols.mu_plus), abs(symbols.mu_minus)))


def rk4(rhs, y, t0: float, t_end: float, dt: float, combine, snapshots=()):
    """Classical RK4 on an arbitrary state via ``combine(y, [(w, k), ...])``.

    Returns the final state and the states at ``snapshots`` (hit exactly by
    shortening the step before each requested time).
    """
    stops = sorted({float(s) for s in snapshots if t0 < s < t_end} | {float(t_end)})
    out = {}
    t = t0
    for stop in stops:
        steps = max(1, math.ceil((stop - t) / dt - 1e-9)) if stop > t else 0
        h = (stop - t) / steps if steps else 0.0
        for _ in range(steps):
            k1 = rhs(y)
            k2 = rhs(combine(y, [(h / 2, k1)]))
            k3 = rhs(combine(y, [(h / 2, k2)]))
            k4 = rhs(combine(y, [(h, k3)]))
            y = combine(y, [(h / 6, k1), (h / 3, k2), (h / 3, k3), (h / 6, k4)])
        t = stop
        out[stop] = y
    return y, out


def _combine1(y: FirstOrderState, incs) -> FirstOrderState:
    km, kp = y.k_minus, y.k_plus
    cm, fm, cp, fp = km.constant, km.fluct_hat, kp.constant, kp.fluct_hat
    for w, k in incs:
        cm = cm + w * k.k_minus.constant
        fm = fm + w * k.k_minus.fluct_hat
        cp = cp + w * k.k_plus.constant
        fp = fp + w * k.k_plus.fluct_hat
    return FirstOrderState(SplitField(cm, fm, km.grid), SplitField(cp, fp, kp.grid), y.t)


def evolve_ode(params: ModelParams, init: FirstOrderInit, t_end: float, dt: float,
               grid: Optional[FourierGrid] = None, snapshots=()):
    """RK4 integration of the first-order equations; returns ``FirstOrderState`` at ``t_end``.

    With ``snapshots`` given, returns ``(final_state, {t: state})`` instead.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    grid = _resolve_grid(params, init, grid)
    sym = build_symbols(params, grid)
    if dt * _max_rate(sym) >= 0.5:
        raise ValueError(f"stability guard: dt * max|f| = {dt * _max_rate(sym):.3g} >= 0.5")
    y0 = initial_state(init, grid)
    if t_end == 0:
        return (y0, {}) if snapshots else y0
    final, snaps = rk4(lambda y: first_order_rhs(sym, y), y0, 0.0, t_end, dt, _combine1, snapshots)
    final = FirstOrderState(final.k_minus, final.k_plus, float(t_end))
    if snapshots:
        snaps = {s: FirstOrderState(v.k_minus, v.k_plus, s) for s, v in snaps.items()}
        return final, snaps
    return final


def is_one(x: float) -> bool:
    return math.isclose(x, 1.0, rel_tol=0, abs_tol=1e-12)


def limit_first(params: ModelParams, init: FirstOrderInit) -> tuple:
    """Verdicts ``(minus, plus)`` for ``t -> infinity``."""
    lp, lm, lam = params.lambda_plus, params.lambda_minus, params.lambda_cross
    if is_one(lm):
        minus = AsymptoticVerdict("finite", init.c_minus)
    elif lm < 1:
        minus = AsymptoticVerdict("zero", 0.0)
    else:
        minus = AsymptoticVerdict("diverges", rate="exponential")

    if is_one(lp) and is_one(lm):
        plus = AsymptoticVerdict("diverges", rate="linear")
    elif (lp > 1 and not is_one(lp)) or (lm > 1 and not is_one(lm)):
        plus = AsymptoticVerdict("diverges", rate="exponential")
    elif is_one(lp):
        plus = AsymptoticVerdict("finite", init.c_plus + lam * init.c_minus / (1 - lm))
    elif is_one(lm):
        plus = AsymptoticVerdict("finite", lam * init.c_minus / (1 - lp))
    else:
        plus = AsymptoticVerdict("zero", 0.0)
    return minus, plus
