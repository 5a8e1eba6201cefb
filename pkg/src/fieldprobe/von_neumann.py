"""Strong-coupling pointer-variable measurement of a smeared field.

A pointer with conjugate pair (X, P) couples through ``P phi(F)``.  After
the interaction the pointer position reads the smeared field, broadened by
the apparatus spread and by the noise functional delta_F, which measures
how much the field fails to commute with itself across the smearing
region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import SmearingProfile, Wavepacket, dispersion, radial_transform
from .numerics import DomainError, dawson, integrate_semi_infinite

__all__ = [
    "ApparatusState",
    "PointerReadout",
    "delta_F",
    "delta_F_massless_closed",
    "pointer_statistics",
    "povm_density",
    "povm_weight",
    "smeared_coherent_mean",
    "smeared_vacuum_variance",
]


@dataclass(frozen=True)
class ApparatusState:
    """Zero-mean, uncorrelated Gaussian pointer state."""

    sigma_X: float
    sigma_P: float

    def __post_init__(self):
        if not (self.sigma_X > 0 and self.sigma_P > 0):
            raise DomainError("ApparatusState: spreads must be positive")
        if self.sigma_X * self.sigma_P < 0.5 * (1 - 1e-12):
            raise DomainError(
                f"ApparatusState violates sigma_X*sigma_P >= 1/2 "
                f"(got {self.sigma_X * self.sigma_P:.6g})")

    @classmethod
    def pure(cls, sigma_P: float) -> "ApparatusState":
        return cls(0.5 / sigma_P, sigma_P)

    @property
    def is_pure(self) -> bool:
        return abs(2 * self.sigma_X * self.sigma_P - 1) < 1e-10

    def noise_sq(self, dF: float) -> float:
        return self.sigma_X**2 + (self.sigma_P * dF) ** 2


@dataclass(frozen=True)
class PointerReadout:
    mean_X: float
    var_X: float
    noise_N: float
    snr: float


def delta_F(F: SmearingProfile, m: float = 0.0, *, rtol: float = 1e-12) -> float:
    """Noise functional (2 lam^2 / pi^{7/2}) int_0^inf dp p^2 exp(-s_X^2 p^2) D(s_T e_p) / e_p."""
    if m < 0:
        raise DomainError("mass must be >= 0")
    if F.lam == 0:
        return 0.0

    def integrand(p):
        e = dispersion(p, m)
        # p^2 / e written as p * (p / e) so that m = 0 stays finite at p = 0
        ratio = np.divide(p, e, out=np.ones_like(p), where=e > 0)
        return p * ratio * np.exp(-(F.s_X * p) ** 2) * dawson(F.s_T * e)

    val = integrate_semi_infinite(integrand, 1.0 / F.s_X, tol=1e-300, rtol=rtol)
    return 2 * F.lam**2 / math.pi**3.5 * float(val)


def delta_F_massless_closed(F: SmearingProfile) -> float:
    return F.lam**2 / (2 * math.pi**3) * F.s_T / (F.s_X * (F.s_X**2 + F.s_T**2))


def povm_weight(omega: ApparatusState, dF: float, x):
    """w(x) = int dk/sqrt(2 pi) exp(i k x - i k^2 dF / 2) <k|Omega> for the pure
    Gaussian pointer state, in closed form.

    Mixed states have no single amplitude; use :func:`povm_density`.
    """
    if not omega.is_pure:
        raise DomainError("povm_weight needs a pure state (sigma_X*sigma_P = 1/2); "
                          "use povm_density for mixed states")
    x = np.asarray(x, dtype=float)
    sp2 = omega.sigma_P**2
    A = 1.0 / (4 * sp2) + 0.5j * dF
    pref = (2 * math.pi * sp2) ** -0.25 / math.sqrt(2 * math.pi) * np.sqrt(math.pi / A)
    return pref * np.exp(-x * x / (4 * A))


def povm_density(omega: ApparatusState, dF: float, x):
    """Pointer outcome density for any valid Gaussian state.

    The readout shift is linear in (X, P), so the outcome is Gaussian with
    variance sigma_X^2 + sigma_P^2 dF^2; for pure states this equals |w(x)|^2.
    """
    x = np.asarray(x, dtype=float)
    v = omega.noise_sq(dF)
    return np.exp(-x * x / (2 * v)) / math.sqrt(2 * math.pi * v)


def pointer_statistics(field_mean: float, field_var: float, omega: ApparatusState,
                       dF: float) -> PointerReadout:
    if field_var < 0:
        raise DomainError("field variance must be >= 0")
    n2 = omega.noise_sq(dF)
    noise = math.sqrt(n2)
    snr = abs(field_mean) / noise if noise > 0 else math.inf
    return PointerReadout(float(field_mean), float(field_var + n2), noise, snr)


def smeared_vacuum_variance(F: SmearingProfile, m: float = 0.0) -> float:
    """<0|phi(F)^2|0> = (lam^2 / 4 pi^2) int dk k^2 exp(-k^2 s_X^2 - e^2 s_T^2) / e."""
    if F.lam == 0:
        return 0.0

    def integrand(k):
        e = dispersion(k, m)
        ratio = np.divide(k, e, out=np.ones_like(k), where=e > 0)
        return k * ratio * np.exp(-(k * F.s_X) ** 2 - (e * F.s_T) ** 2)

    scale = 1.0 / max(F.s_X, F.s_T)
    val = integrate_semi_infinite(integrand, scale, tol=1e-300, rtol=1e-12)
    return F.lam**2 / (4 * math.pi**2) * float(val)


def smeared_coherent_mean(F: SmearingProfile, alpha: Wavepacket, amplitude: complex = 1.0) -> float:
    """<phi(F)> in the coherent state with amplitude ``amplitude * alpha(k)``.

    Only the l = 0 part of alpha couples because the Gaussian profile is
    isotropic about the origin.
    """
    def weight(k):
        e = dispersion(k, alpha.m)
        return (np.exp(-0.5 * (k * F.s_X) ** 2 - 0.5 * (e * F.s_T) ** 2 - 1j * e * F.t_center)
                / np.sqrt(2 * e))

    val = amplitude * F.lam * radial_transform(alpha, weight)
    return float(2 * np.real(val))
