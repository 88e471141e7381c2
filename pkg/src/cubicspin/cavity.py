"""Map cavity-QED parameters onto the effective cubic coupling.

A photon reflected from a dispersively coupled cavity picks up an
m-dependent phase. Detuned by kappa/2 from the cavity resonance, the phase
is -arctan(1/(1 - x)) with x = 4 kappa0 m. Its Taylor series up to x^3
contains a cubic term (16/3) kappa0^3 m^3, and n photons add up to
mu_n = 32 n kappa0^3 / 3.

All rates share one unit (for example g = 1). ``gamma_atom`` is the atomic
linewidth. It is unrelated to the collective dephasing rate of the damping
model.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dicke import ValidationError

REGIME_THRESHOLD = 0.1      # kappa0 * N below this counts as kappa0 << 1/N
DISPERSIVE_FACTOR = 10.0    # Delta must exceed g, kappa, gamma_atom by this factor
POLE_MARGIN = 0.1


class RegimeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CavityParams:
    g: float
    kappa: float
    gamma_atom: float
    delta: float
    n_photons: int = 1
    n_spins: int = 1

    def __post_init__(self):
        for name in ("g", "kappa", "gamma_atom", "delta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be positive, got {v}")
        if int(self.n_photons) != self.n_photons or self.n_photons < 0:
            raise ValidationError("n_photons must be a non-negative integer")
        if int(self.n_spins) != self.n_spins or self.n_spins < 1:
            raise ValidationError("n_spins must be a positive integer")

    @classmethod
    def from_cooperativity(cls, g, eta, gamma_atom, delta, n_photons=1, n_spins=1):
        """Fix kappa through the single-atom cooperativity eta = 4 g^2 / (kappa gamma_atom)."""
        if not eta > 0:
            raise ValidationError("cooperativity must be positive")
        return cls(g, 4 * g * g / (eta * gamma_atom), gamma_atom, delta, n_photons, n_spins)

    @property
    def eta(self) -> float:
        return 4 * self.g**2 / (self.kappa * self.gamma_atom)

    @property
    def omega(self) -> float:
        return self.g**2 / self.delta

    @property
    def kappa0(self) -> float:
        return self.omega / self.kappa

    @property
    def dispersive_ok(self) -> bool:
        return self.delta >= DISPERSIVE_FACTOR * max(self.g, self.kappa, self.gamma_atom)


@dataclass(frozen=True)
class EffectiveCoupling:
    kappa0: float
    mu_n: float            # chi t accumulated after n photons
    mu_n_cooperativity: float  # the same from n (eta gamma_atom / Delta)^3 / 6
    alpha_eff: float       # N * mu_n
    t0: float              # half the per-photon interaction window, 4 kappa0^2 / Omega
    regime_ok: bool
    dispersive_ok: bool


def effective_coupling(params: CavityParams) -> EffectiveCoupling:
    k0 = params.kappa0
    n = params.n_photons
    mu = 32.0 * n * k0**3 / 3.0
    mu_alt = n * (params.eta * params.gamma_atom / params.delta) ** 3 / 6.0
    return EffectiveCoupling(
        kappa0=k0,
        mu_n=mu,
        mu_n_cooperativity=mu_alt,
        alpha_eff=params.n_spins * mu,
        t0=4 * k0**2 / params.omega,
        regime_ok=k0 * params.n_spins < REGIME_THRESHOLD,
        dispersive_ok=params.dispersive_ok,
    )


def exact_phase(x) -> np.ndarray:
    """Reflection phase -arctan(1/(1 - x)), continued through the pole at x = 1."""
    x = np.asarray(x, dtype=float)
    return -np.arctan2(1.0, 1.0 - x)


def cubic_phase(x) -> np.ndarray:
    """Third-order expansion of ``exact_phase`` about x = 0."""
    x = np.asarray(x, dtype=float)
    return -(math.pi / 4 + x / 2 + x**2 / 4 + x**3 / 12)


def taylor_coefficients(order: int = 5, radius: float = 0.25, points: int = 64) -> np.ndarray:
    """Numerical Taylor coefficients of arctan(1/(1 - x)) from a contour integral.

    a_k = (1 / 2 pi i) closed integral f(z) / z^(k+1) dz on |z| = radius; the
    trapezoid rule on a circle converges geometrically for analytic f.
    """
    theta = 2 * np.pi * np.arange(points) / points
    z = radius * np.exp(1j * theta)
    # arctan(w) = (1/2i) log((1 + i w)/(1 - i w)), analytic inside |z| < 1 here
    w = 1.0 / (1.0 - z)
    f = np.log((1 + 1j * w) / (1 - 1j * w)) / 2j
    k = np.arange(order + 1)
    coef = np.array([np.mean(f * z ** (-kk)) for kk in k])
    return coef.real


@dataclass(frozen=True)
class PhaseExpansionCheck:
    max_error: float
    cubic_span: float
    near_pole: bool


def phase_expansion_error(params: CavityParams, m_range=None) -> PhaseExpansionCheck:
    """Max |exact - cubic| phase over m in m_range (default -N/2..N/2)."""
    k0 = params.kappa0
    if m_range is None:
        S = params.n_spins / 2
        m = np.arange(-S, S + 0.5, 1.0)
    else:
        m = np.asarray(m_range, dtype=float)
    x = 4 * k0 * m
    near = bool(np.any(np.abs(1 - x) < POLE_MARGIN))
    if near:
        warnings.warn("phase expansion evaluated within 0.1 of the pole at 4 kappa0 m = 1",
                      RegimeWarning, stacklevel=2)
    err = np.abs(exact_phase(x) - cubic_phase(x))
    cubic = 16.0 / 3.0 * k0**3 * m**3
    return PhaseExpansionCheck(float(err.max()), float(np.ptp(cubic)), near)
