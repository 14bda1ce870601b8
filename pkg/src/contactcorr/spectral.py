"""Fourier-grid machinery, symbol fields and exponential divided differences.

Transform convention (continuous, approximated on a periodic lattice)::

    f_hat(p) = int exp(-i p.x) f(x) dx
    f(x)     = (2 pi)^-d int exp(i p.x) f_hat(p) dp

Grid arrays are kept in FFT (natural) ordering: index ``j`` on an axis stands
for ``x = j dx`` for ``j < n/2`` and ``x = (j - n) dx`` otherwise, and
likewise for frequencies with spacing ``2 pi / L``.

Every time-integral of products of exponentials in the closed-form solutions
is a divided difference of ``z -> exp(t z)`` over a handful of exponents.
:func:`expdd` evaluates these to full precision for any coincidence pattern,
which is how the frequency sets where denominators vanish are handled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate, special

from .model import ModelParams

DEFAULT_EPSILON_DD = 1e-7

# clustered exponents (t * spread below this) are summed as a Taylor series
_SERIES_SPREAD = 0.5
_SERIES_TERMS = 20


@dataclass(frozen=True)
class FourierGrid:
    d: int = 3
    n: int = 32
    length: float = 40.0

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError("grid dimension must be 1, 2 or 3")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError("points per axis must be a power of two >= 8")
        if not self.length > 0:
            raise ValueError("box length must be positive")

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def dp(self) -> float:
        return 2 * math.pi / self.length

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d

    @property
    def freq_cell_volume(self) -> float:
        return self.dp**self.d

    def axis_positions(self) -> np.ndarray:
        return np.fft.fftfreq(self.n, d=1.0 / self.length)

    def axis_frequencies(self) -> np.ndarray:
        return 2 * math.pi * np.fft.fftfreq(self.n, d=self.dx)

    def positions(self) -> list:
        return np.meshgrid(*([self.axis_positions()] * self.d), indexing="ij", sparse=True)

    def radius(self) -> np.ndarray:
        return _norm(self.positions(), self.shape)

    def p_norm(self) -> np.ndarray:
        axes = np.meshgrid(*([self.axis_frequencies()] * self.d), indexing="ij", sparse=True)
        return _norm(axes, self.shape)

    def reflect(self, f: np.ndarray) -> np.ndarray:
        """Return ``f(-x)`` for a field in natural ordering."""
        idx = (-np.arange(self.n)) % self.n
        out = f
        for ax in range(self.d):
            out = np.take(out, idx, axis=ax)
        return out

    def forward(self, f: np.ndarray) -> np.ndarray:
        return forward_transform(self, f)

    def inverse(self, f_hat: np.ndarray) -> np.ndarray:
        return inverse_transform(self, f_hat)


def _norm(axes, shape) -> np.ndarray:
    sq = np.zeros(shape)
    for a in axes:
        sq = sq + a * a
    return np.sqrt(sq)


def default_grid(params: ModelParams, n: int = 32) -> FourierGrid:
    """Grid with ``L = 40`` times the widest kernel scale."""
    scale = max(k.scale for k in params.kernels.values())
    return FourierGrid(params.d, n, 40.0 * scale)


def _check_shape(grid: FourierGrid, f: np.ndarray):
    if np.shape(f) != grid.shape:
        raise ValueError(f"field shape {np.shape(f)} does not match grid {grid.shape}")


def forward_transform(grid: FourierGrid, f: np.ndarray) -> np.ndarray:
    _check_shape(grid, f)
    return np.fft.fftn(f) * grid.cell_volume


def inverse_transform(grid: FourierGrid, f_hat: np.ndarray) -> np.ndarray:
    _check_shape(grid, f_hat)
    return np.fft.ifftn(f_hat) / grid.cell_volume


def radial_inverse_transform(spectrum, r, d: int = 3, p_max: float = np.inf) -> np.ndarray:
    """Inverse transform of a radial spectrum ``spectrum(|p|)`` at radii ``r``.

    Uses the one-dimensional Hankel reductions (a sine transform for d = 3).
    Intended as an accuracy cross-check for grid results; adaptive quadrature,
    so it is slow compared with the FFT path.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty_like(r)
    upper = p_max if np.isfinite(p_max) else 60.0
    for i, ri in enumerate(r):
        if d == 1:
            g = lambda q: float(spectrum(q)) * math.cos(q * ri) / math.pi
        elif d == 2:
            g = lambda q: float(spectrum(q)) * special.j0(q * ri) * q / (2 * math.pi)
        else:
            if ri == 0:
                g = lambda q: float(spectrum(q)) * q * q / (2 * math.pi**2)
            else:
                g = lambda q: float(spectrum(q)) * q * math.sin(q * ri) / (2 * math.pi**2 * ri)
        # split at q = 1 so that integrable singularities at the origin are isolated
        lo, _ = integrate.quad(g, 0.0, min(1.0, upper), limit=400, epsabs=1e-12, epsrel=1e-10)
        hi = 0.0
        if upper > 1.0:
            hi, _ = integrate.quad(g, 1.0, upper, limit=2000, epsabs=1e-12, epsrel=1e-10)
        out[i] = lo + hi
    return out


@dataclass(frozen=True, eq=False)
class SplitField:
    """Correlation quantity ``C + F(x)``: a constant plus an integrable part given by its transform."""

    constant: float
    fluct_hat: np.ndarray
    grid: FourierGrid

    @classmethod
    def constant_only(cls, value: float, grid: FourierGrid) -> "SplitField":
        return cls(float(value), np.zeros(grid.shape), grid)

    @classmethod
    def from_space(cls, constant: float, fluct: Optional[np.ndarray], grid: FourierGrid) -> "SplitField":
        if fluct is None:
            return cls.constant_only(constant, grid)
        return cls(float(constant), _realify(forward_transform(grid, fluct)), grid)

    def fluct_space(self) -> np.ndarray:
        return inverse_transform(self.grid, self.fluct_hat).real

    def space(self) -> np.ndarray:
        return self.constant + self.fluct_space()

    def fluct_sup(self) -> float:
        return float(np.max(np.abs(self.fluct_space())))

    def radial_profile(self) -> tuple:
        """Values along the first axis for ``r = 0, dx, ..., (n/2) dx``."""
        f = self.space()
        m = self.grid.n // 2 + 1
        line = f[(slice(0, m),) + (0,) * (self.grid.d - 1)]
        return np.arange(m) * self.grid.dx, line

    def __add__(self, other: "SplitField") -> "SplitField":
        return SplitField(self.constant + other.constant, self.fluct_hat + other.fluct_hat, self.grid)

    def scaled(self, s: float) -> "SplitField":
        return SplitField(s * self.constant, s * self.fluct_hat, self.grid)


def _realify(a: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Drop the imaginary part of a transform that is real up to rounding."""
    scale = max(float(np.max(np.abs(a))), 1e-300)
    if np.max(np.abs(a.imag)) <= tol * scale:
        return a.real.copy()
    return a


# -- divided differences of exp(t z) ------------------------------------------


@dataclass(frozen=True)
class SingularSetPolicy:
    """Switching threshold for the near-coincidence branch of :func:`phi1`."""

    epsilon_dd: float = DEFAULT_EPSILON_DD

    def __post_init__(self):
        if not self.epsilon_dd > 0:
            raise ValueError("epsilon_dd must be positive")


_DEFAULT_POLICY = SingularSetPolicy()


def _expm1_over_x(x):
    """``expm1(x) / x`` with the removable point at 0; array input."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    tiny = np.abs(x) < 1e-3
    xt = x[tiny]
    out[tiny] = 1 + xt / 2 * (1 + xt / 3 * (1 + xt / 4 * (1 + xt / 5 * (1 + xt / 6))))
    xl = x[~tiny]
    out[~tiny] = np.expm1(xl) / xl
    return out


def phi1(a, b, t, policy: SingularSetPolicy = _DEFAULT_POLICY):
    """Divided difference ``(exp(t a) - exp(t b)) / (a - b)``, continuous across ``a = b``.

    Exactly symmetric in ``(a, b)``. When ``|a - b| <= eps * max(1, |a|, |b|)``
    the value is taken from the series ``t exp(t b) (1 + t(a-b)/2 + ...)``,
    which equals ``t exp(t a)`` at coincidence.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    a, b, t = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float), t)
    hi, lo = np.maximum(a, b), np.minimum(a, b)
    delta = lo - hi
    near = np.abs(delta) <= policy.epsilon_dd * np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        exact = np.exp(t * hi) * np.expm1(t * delta) / delta
        series = t * np.exp(t * hi) * _expm1_over_x(t * delta)
    out = np.where(near, series, exact)
    return out if out.ndim else float(out)


def _complete_homogeneous(u: np.ndarray, terms: int) -> list:
    """``h_j(u_0, ..., u_n)`` for ``j < terms``; ``u`` has the variables on axis 0."""
    h = [np.ones(u.shape[1:])] + [np.zeros(u.shape[1:]) for _ in range(terms - 1)]
    for ui in u:
        for j in range(1, terms):
            h[j] = h[j] + ui * h[j - 1]
    return h


def expdd(t: float, *z, policy: SingularSetPolicy = _DEFAULT_POLICY):
    """Divided difference of ``exp(t .)`` over the exponents ``z``.

    Equals the nested time-integral ``int_0^t exp(z0 (t - s)) expdd(s, z1, ...) ds``
    and is symmetric in ``z``. Order 0 is ``exp(t z0)``, order 1 is :func:`phi1`.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if len(z) == 0:
        raise ValueError("need at least one exponent")
    if len(z) == 1:
        return np.exp(t * np.asarray(z[0], dtype=float))
    if len(z) == 2:
        return phi1(z[0], z[1], t, policy)
    zs = np.sort(np.stack(np.broadcast_arrays(*[np.asarray(v, dtype=float) for v in z])), axis=0)
    n = len(z) - 1
    spread = zs[-1] - zs[0]
    clustered = t * spread < _SERIES_SPREAD
    out = np.empty(zs.shape[1:])
    if np.any(clustered):
        zc = zs[:, clustered]
        m = zc.mean(axis=0)
        h = _complete_homogeneous(t * (zc - m), _SERIES_TERMS)
        acc = np.zeros_like(m)
        for j in reversed(range(_SERIES_TERMS)):
            acc = acc + h[j] / math.factorial(j + n)
        out[clustered] = np.exp(t * m) * t**n * acc
    if np.any(~clustered):
        zw = zs[:, ~clustered]
        upper = expdd(t, *zw[1:], policy=policy)
        lower = expdd(t, *zw[:-1], policy=policy)
        out[~clustered] = (upper - lower) / (zw[-1] - zw[0])
    return out if out.ndim else float(out)


def phi2(a, b, c, t: float, policy: SingularSetPolicy = _DEFAULT_POLICY):
    """Second divided difference: ``int_0^t exp((t - s) a) phi1(b, c, s) ds``."""
    return expdd(t, a, b, c, policy=policy)


def phi3(a, b, c, e, t: float, policy: SingularSetPolicy = _DEFAULT_POLICY):
    """Third divided difference: ``int_0^t exp((t - s) a) phi2(b, c, e, s) ds``."""
    return expdd(t, a, b, c, e, policy=policy)


def expdd_bound(*z):
    """Time-uniform bound ``sup_t expdd(t, *z)`` for nonpositive exponents.

    Peeling one exponent at a time, ``int_0^t exp(z (t-s)) g(s) ds <= sup g / |z|``,
    and ``phi1(a, b, t) < -1/b`` for the more negative ``b``. The bound is the
    reciprocal product of the ``n`` largest magnitudes.
    """
    mags = np.sort(np.abs(np.stack(np.broadcast_arrays(*[np.asarray(v, dtype=float) for v in z]))), axis=0)
    with np.errstate(divide="ignore"):
        return 1.0 / np.prod(mags[1:], axis=0)


# -- symbols ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SymbolTable:
    """Fourier symbols of the linear dynamics on a set of frequency magnitudes."""

    params: ModelParams
    p: np.ndarray
    a_plus: np.ndarray
    a_minus: np.ndarray
    a_cross: np.ndarray
    grid: Optional[FourierGrid] = None

    @property
    def mu_plus(self) -> float:
        return self.params.mu_plus

    @property
    def mu_minus(self) -> float:
        return self.params.mu_minus

    @property
    def f_plus(self) -> np.ndarray:
        return self.params.lambda_plus * self.a_plus - 1.0

    @property
    def f_minus(self) -> np.ndarray:
        return self.params.lambda_minus * self.a_minus - 1.0

    @property
    def h1(self):
        return self.mu_plus - 2 * self.f_plus

    @property
    def h2(self):
        return self.mu_minus - 2 * self.f_minus

    @property
    def h3(self):
        return self.f_plus + self.f_minus

    @property
    def h4(self):
        return self.mu_minus - self.f_plus - self.f_minus

    @property
    def g1(self):
        return self.f_minus - self.f_plus

    @property
    def g2(self):
        return self.mu_minus - 2 * self.f_plus


def symbols_at(params: ModelParams, p) -> SymbolTable:
    """Symbol table on arbitrary frequency magnitudes (used by radial quadrature)."""
    p = np.abs(np.asarray(p, dtype=float))
    return SymbolTable(params, p, params.kernel_plus.fourier(p), params.kernel_minus.fourier(p),
                       params.kernel_cross.fourier(p))


@lru_cache(maxsize=32)
def build_symbols(params: ModelParams, grid: FourierGrid) -> SymbolTable:
    if params.d != grid.d:
        raise ValueError("grid and kernel dimensions differ")
    p = grid.p_norm()
    tab = symbols_at(params, p)
    for arr in (p, tab.a_plus, tab.a_minus, tab.a_cross):
        arr.setflags(write=False)
    return SymbolTable(params, p, tab.a_plus, tab.a_minus, tab.a_cross, grid)


def check_disjoint_singular_sets(symbols: SymbolTable, eps: float = 1e-9) -> bool:
    """True iff ``g1`` and ``g2`` never vanish together on the lattice.

    Raises ``ValueError`` for equal rates, where the underlying argument does not apply.
    """
    if math.isclose(symbols.params.lambda_plus, symbols.params.lambda_minus, rel_tol=0, abs_tol=1e-15):
        raise ValueError("disjointness of the singular sets needs lambda_plus != lambda_minus")
    both = (np.abs(symbols.g1) < eps) & (np.abs(symbols.g2) < eps)
    return not bool(np.any(both))
