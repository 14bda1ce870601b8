"""Model parameters, dispersal kernels and initial data.

Two kernel families are supported, both radial, even and normalised:

* ``gaussian``: ``a(x) = (2 pi s^2)^(-d/2) exp(-|x|^2 / 2 s^2)``
* ``tent``: ``a(x) = (1 - |x|/r)_+ / Z`` with ``Z = S_{d-1} r^d / (d (d+1))``

Every hypothesis on the model is checked by :func:`validate_params`, which
returns violations as data instead of raising.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, special

FAMILIES = ("gaussian", "tent")

# below this value of |p| * scale the closed-form tent transforms cancel badly
_TENT_SERIES_CUTOFF = 0.1


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


@dataclass(frozen=True)
class Kernel:
    """Radial dispersal density ``a`` on R^d.

    ``scale`` is the standard deviation per axis for the Gaussian family and
    the support radius for the tent family.
    """

    family: str
    scale: float
    d: int

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not self.scale > 0:
            raise ValueError("kernel scale must be positive")
        if self.d not in (1, 2, 3):
            raise ValueError("kernel dimension must be 1, 2 or 3")

    @classmethod
    def gaussian(cls, sigma: float = 1.0, d: int = 3) -> "Kernel":
        return cls("gaussian", float(sigma), int(d))

    @classmethod
    def tent(cls, radius: float = 1.0, d: int = 3) -> "Kernel":
        return cls("tent", float(radius), int(d))

    # -- radial profile ---------------------------------------------------
    def radial_density(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        s, d = self.scale, self.d
        if self.family == "gaussian":
            return (2 * math.pi * s * s) ** (-d / 2) * np.exp(-0.5 * (r / s) ** 2)
        norm = sphere_area(d) * s**d / (d * (d + 1))
        return np.clip(1.0 - r / s, 0.0, None) / norm

    def density(self, x):
        """Evaluate ``a(x)``; ``x`` has trailing axis of length ``d`` (or is scalar for d=1)."""
        x = np.asarray(x, dtype=float)
        if self.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            r = np.abs(x)
        else:
            r = np.linalg.norm(x, axis=-1)
        return self.radial_density(r)

    def moment(self, k: int) -> float:
        """Radial moment ``int |x|^k a(x) dx``."""
        s, d = self.scale, self.d
        if self.family == "gaussian":
            # E|X|^k for X ~ N(0, s^2 I_d)
            return s**k * 2 ** (k / 2) * math.gamma((d + k) / 2) / math.gamma(d / 2)
        return s**k * d * (d + 1) / ((d + k) * (d + k + 1))

    @property
    def second_moment(self) -> float:
        return self.moment(2)

    # -- Fourier side -----------------------------------------------------
    def fourier(self, p):
        """``a_hat(|p|) = int cos(p.x) a(x) dx`` evaluated at frequency magnitudes ``p``."""
        p = np.abs(np.asarray(p, dtype=float))
        if self.family == "gaussian":
            return np.exp(-0.5 * (self.scale * p) ** 2)
        return self._tent_fourier(p)

    def _tent_fourier(self, p):
        d = self.d
        x = p * self.scale
        out = np.empty_like(x)
        small = x < _TENT_SERIES_CUTOFF
        xs = x[small]
        # cos-moment expansion: <(p.x)^2k> = |p|^2k m_2k (2k-1)!! / prod_{j<k} (d + 2j)
        m2 = self.moment(2) / self.scale**2
        m4 = self.moment(4) / self.scale**4
        m6 = self.moment(6) / self.scale**6
        out[small] = (
            1.0
            - m2 * xs**2 / (2 * d)
            + m4 * xs**4 / (8 * d * (d + 2))
            - m6 * xs**6 / (48 * d * (d + 2) * (d + 4))
        )
        xl = x[~small]
        if d == 1:
            out[~small] = (np.sin(xl / 2) / (xl / 2)) ** 2
        elif d == 2:
            h0, h1 = special.struve(0, xl), special.struve(1, xl)
            out[~small] = 3 * math.pi * (special.j1(xl) * h0 - special.j0(xl) * h1) / xl**2
        else:
            out[~small] = 12 * (2 * (1 - np.cos(xl)) - xl * np.sin(xl)) / xl**4
        return out

    def fourier_decay_exponent(self) -> float:
        """Power ``q`` with ``|a_hat(p)| = O(|p|^-q)``; ``inf`` for super-polynomial decay.

        The tent profile has a derivative jump across the sphere ``|x| = r``,
        which gives ``q = (d + 3) / 2``.
        """
        if self.family == "gaussian":
            return math.inf
        return (self.d + 3) / 2

    # -- sampling ---------------------------------------------------------
    def sample(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        """Draw ``size`` displacements with density ``a``; returns shape ``(size, d)``."""
        d = self.d
        if self.family == "gaussian":
            return rng.normal(0.0, self.scale, size=(size, d))
        # |xi| / r ~ Beta(d, 2) since the radial density is u^(d-1) (1 - u)
        radius = self.scale * rng.beta(d, 2, size=size)
        direction = rng.normal(size=(size, d))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        return direction * radius[:, None]


def kernel_density(k: Kernel, x):
    return k.density(x)


def kernel_fourier(k: Kernel, p):
    return k.fourier(p)


def kernel_sample(k: Kernel, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    return k.sample(rng, size)


@dataclass(frozen=True)
class ModelParams:
    """Rates and kernels of the two-type contact model.

    ``lambda_cross`` is the rate at which each (-) particle seeds (+) offspring.
    """

    lambda_plus: float
    lambda_minus: float
    lambda_cross: float
    kernel_plus: Kernel
    kernel_minus: Kernel
    kernel_cross: Kernel

    @property
    def d(self) -> int:
        return self.kernel_plus.d

    @property
    def mu_plus(self) -> float:
        return self.lambda_plus - 1.0

    @property
    def mu_minus(self) -> float:
        return self.lambda_minus - 1.0

    @property
    def kernels(self) -> dict:
        return {"kernel_plus": self.kernel_plus, "kernel_minus": self.kernel_minus,
                "kernel_cross": self.kernel_cross}

    def replace(self, **changes) -> "ModelParams":
        import dataclasses

        return dataclasses.replace(self, **changes)


def gaussian_params(lambda_plus, lambda_minus, lambda_cross, sigma=1.0, d=3) -> ModelParams:
    """Shortcut: all three kernels Gaussian with the same width."""
    k = Kernel.gaussian(sigma, d)
    return ModelParams(lambda_plus, lambda_minus, lambda_cross, k, k, k)


def _normalisation(k: Kernel) -> float:
    d = k.d
    upper = k.scale if k.family == "tent" else 40.0 * k.scale
    val, _ = integrate.quad(lambda r: r ** (d - 1) * float(k.radial_density(r)), 0.0, upper,
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return sphere_area(d) * val


def decay_witness(k: Kernel, delta: float) -> float:
    """Smallest ``A`` with ``a(x) <= A / (1 + |x|)^delta``, found on a fine radial grid."""
    upper = k.scale if k.family == "tent" else 60.0 * k.scale
    r = np.linspace(0.0, upper, 20001)
    return float(np.max(k.radial_density(r) * (1.0 + r) ** delta))


def kernel_violations(name: str, k: Kernel, rng: Optional[np.random.Generator] = None,
                      delta: Optional[float] = None) -> list:
    """Check one kernel against the model hypotheses; returns violation strings."""
    out = []
    rng = rng if rng is not None else np.random.default_rng(0)
    x = rng.normal(scale=2 * k.scale, size=(256, k.d))
    vals, mirrored = k.density(x), k.density(-x)
    if np.any(vals < 0):
        out.append(f"{name}: density must be nonnegative")
    if not np.allclose(vals, mirrored, rtol=1e-14, atol=0):
        out.append(f"{name}: density must be even")
    if abs(_normalisation(k) - 1.0) > 1e-10:
        out.append(f"{name}: normalization <a> = 1 fails")
    p = np.linspace(0.0, 50.0 / k.scale, 2001)
    ahat = k.fourier(p)
    if np.any(np.abs(ahat) > 1 + 1e-12) or abs(ahat[0] - 1.0) > 1e-12:
        out.append(f"{name}: Fourier bound |a_hat| <= 1 with a_hat(0) = 1 fails")
    if not k.fourier_decay_exponent() > k.d:
        out.append(f"{name}: Fourier transform not integrable (a_hat not in L1)")
    if delta is not None:
        if not delta > 2 * k.d:
            out.append(f"{name}: decay exponent delta must exceed 2d")
        elif not np.isfinite(decay_witness(k, delta)):
            out.append(f"{name}: decay bound fails")
    return out


def validate_params(params: ModelParams, delta: Optional[float] = None) -> list:
    """Return a list of violated model hypotheses (empty when all hold).

    ``delta``, if given, is the decay exponent to witness; the constant
    ``A`` itself is available from :func:`decay_witness`.
    """
    out = []
    for name in ("lambda_plus", "lambda_minus", "lambda_cross"):
        if not getattr(params, name) > 0:
            out.append(f"{name} must be > 0")
    dims = {k.d for k in params.kernels.values()}
    if len(dims) != 1:
        out.append("kernels must share dimension d")
    for name, k in params.kernels.items():
        out.extend(kernel_violations(name, k, delta=delta))
    return out


# -- initial data -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FirstOrderInit:
    """Initial intensities ``k0(+) = c_plus + psi_plus``, ``k0(-) = c_minus + psi_minus``.

    Fluctuation fields are samples on a :class:`~contactcorr.spectral.FourierGrid`
    in FFT (natural) ordering and must be given together with that grid.
    """

    c_plus: float
    c_minus: float
    psi_plus: Optional[np.ndarray] = None
    psi_minus: Optional[np.ndarray] = None
    alpha_minus: Optional[float] = None
    grid: Optional[object] = None

    @property
    def translation_invariant(self) -> bool:
        return all(f is None or not np.any(f) for f in (self.psi_plus, self.psi_minus))

    def lower_bound_minus(self) -> float:
        if self.alpha_minus is not None:
            return self.alpha_minus
        if self.psi_minus is None:
            return self.c_minus
        return float(self.c_minus + np.min(self.psi_minus))

    def violations(self) -> list:
        out = []
        if not self.c_plus > 0:
            out.append("c_plus must be > 0")
        if not self.c_minus > 0:
            out.append("c_minus must be > 0")
        if (self.psi_plus is not None or self.psi_minus is not None) and self.grid is None:
            out.append("fluctuation fields need a grid")
        alpha = self.lower_bound_minus()
        if not alpha > 0:
            out.append("alpha_minus must be > 0")
        if self.psi_minus is not None and np.min(self.c_minus + self.psi_minus) < alpha - 1e-12:
            out.append("c_minus + psi_minus >= alpha_minus fails")
        if self.psi_plus is not None and np.min(self.c_plus + self.psi_plus) < -1e-12:
            out.append("c_plus + psi_plus >= 0 fails")
        for name in ("psi_plus", "psi_minus"):
            f = getattr(self, name)
            if f is not None and self.grid is not None:
                if f.shape != self.grid.shape:
                    out.append(f"{name}: shape does not match grid")
                    continue
                if not (np.all(np.isfinite(f)) and np.all(np.isfinite(self.grid.forward(f)))):
                    out.append(f"{name}: field or its transform not summable")
        return out


@dataclass(frozen=True, eq=False)
class SecondOrderInit:
    """Initial pair intensities ``c_xy + phi_xy(difference)`` for the three type pairs."""

    c_pp: float
    c_pm: float
    c_mm: float
    phi_pp: Optional[np.ndarray] = None
    phi_pm: Optional[np.ndarray] = None
    phi_mm: Optional[np.ndarray] = None
    grid: Optional[object] = None

    @classmethod
    def poisson(cls, first: FirstOrderInit) -> "SecondOrderInit":
        """Pair intensities of a Poisson start with the given first-order constants."""
        return cls(first.c_plus**2, first.c_plus * first.c_minus, first.c_minus**2)

    def violations(self, first: Optional[FirstOrderInit] = None) -> list:
        out = []
        for name in ("c_pp", "c_pm", "c_mm"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be > 0")
        for name in ("phi_pp", "phi_pm", "phi_mm"):
            f = getattr(self, name)
            if f is None:
                continue
            if self.grid is None:
                out.append(f"{name}: fluctuation fields need a grid")
                continue
            if not np.allclose(f, self.grid.reflect(f), rtol=1e-12, atol=1e-14):
                out.append(f"{name} must be even")
            if np.min(getattr(self, "c_" + name[4:]) + f) < -1e-12:
                out.append(f"c + {name} >= 0 fails")
        if first is not None and not first.translation_invariant:
            out.append("translation invariance requires psi_plus = psi_minus = 0")
        return out
