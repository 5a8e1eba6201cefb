"""Perturbative Unruh-DeWitt detector.

To leading order in the coupling the excitation probability splits into a
state-independent switching noise ``P0`` and a one-particle signal ``P1``.
``P1`` has a co-rotating part, resonant at ``e_k = e``, and a
counter-rotating part, which a long switching window suppresses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .field import (SmearingProfile, Wavepacket, dispersion, radial_transform,
                    smearing_fourier, spherical_l0_projection)
from .numerics import DomainError, integrate_semi_infinite

__all__ = [
    "DetectorSpectrum",
    "ExcitationResult",
    "VALIDITY_BOUND",
    "excitation",
    "p0",
    "p1",
    "p1_adiabatic",
    "p1_newton_wigner",
    "p1_terms",
]

VALIDITY_BOUND = 0.1
_MEASURE = 4 * math.pi / (2 * math.pi) ** 1.5


@dataclass(frozen=True)
class DetectorSpectrum:
    """Excited levels (epsilon, mu) above a ground state at zero energy."""

    levels: tuple

    def __post_init__(self):
        lv = tuple((float(e), complex(mu)) for e, mu in self.levels)
        if not lv:
            raise DomainError("DetectorSpectrum needs at least one level")
        eps = [e for e, _ in lv]
        if any(e <= 0 for e in eps):
            raise DomainError("level energies must be > 0")
        if any(b <= a for a, b in zip(eps, eps[1:])):
            raise DomainError("levels must be sorted strictly ascending")
        object.__setattr__(self, "levels", lv)

    @classmethod
    def single(cls, epsilon: float, mu: complex = 1.0) -> "DetectorSpectrum":
        return cls(((epsilon, mu),))

    @property
    def epsilon1(self) -> float:
        return self.levels[0][0]

    def truncated(self, n: int) -> "DetectorSpectrum":
        return DetectorSpectrum(self.levels[:n])


@dataclass(frozen=True)
class ExcitationResult:
    p0: float
    p1: float
    per_level: dict

    @property
    def total(self) -> float:
        return self.p0 + self.p1

    @property
    def perturbative(self) -> bool:
        return self.total <= VALIDITY_BOUND


def _p0_level(F: SmearingProfile, eps: float, m: float) -> float:
    def integrand(k):
        e = dispersion(k, m)
        return k * k / (2 * e) * np.abs(smearing_fourier(F, eps + e, k)) ** 2

    scale = 1.0 / max(F.s_X, F.s_T)
    return _MEASURE * float(integrate_semi_infinite(integrand, scale, tol=1e-300, rtol=1e-10))


def p0(F: SmearingProfile, spec: DetectorSpectrum, m: float = 0.0) -> float:
    """Switching noise sum |mu|^2 int dk_bar |F~(e + e_k, k)|^2 / (2 e_k)."""
    return sum(abs(mu) ** 2 * _p0_level(F, eps, m) for eps, mu in spec.levels if mu != 0)


def _amplitude(F: SmearingProfile, psi: Wavepacket, omega_shift: float, rtol: float) -> complex:
    """int dk_bar psi0(k) F~*(e_k + omega_shift, k) / sqrt(2 e_k)."""
    def weight(k):
        e = psi.energy(k)
        return np.conj(smearing_fourier(F, e + omega_shift, k)) / np.sqrt(2 * e)

    bps = ()
    if omega_shift < 0 and -omega_shift > psi.m:
        bps = (math.sqrt(omega_shift**2 - psi.m**2),)
    val = radial_transform(psi, weight, rtol=rtol, scale=1.0 / F.s_T, breakpoints=bps)
    return complex(np.ravel(val)[0])


def p1_terms(F: SmearingProfile, psi: Wavepacket, spec: DetectorSpectrum, *,
             rtol: float = 1e-10) -> list[tuple[float, float]]:
    """Per level (co-rotating, counter-rotating) contributions to P1."""
    out = []
    for eps, mu in spec.levels:
        w = abs(mu) ** 2
        if w == 0:
            out.append((0.0, 0.0))
            continue
        co = abs(_amplitude(F, psi, -eps, rtol)) ** 2
        counter = abs(_amplitude(F, psi, eps, rtol)) ** 2
        out.append((w * co, w * counter))
    return out


def p1(F: SmearingProfile, psi: Wavepacket, spec: DetectorSpectrum, *, rtol: float = 1e-10) -> float:
    return float(sum(a + b for a, b in p1_terms(F, psi, spec, rtol=rtol)))


def excitation(F: SmearingProfile, psi: Wavepacket, spec: DetectorSpectrum,
               m: float = 0.0) -> ExcitationResult:
    if psi.m != m:
        raise DomainError("wavepacket mass differs from the field mass")
    terms = p1_terms(F, psi, spec)
    per = {}
    for (eps, mu), (a, b) in zip(spec.levels, terms):
        per[eps] = (abs(mu) ** 2 * _p0_level(F, eps, m), a + b)
    return ExcitationResult(sum(v[0] for v in per.values()), sum(v[1] for v in per.values()), per)


def p1_newton_wigner(F: SmearingProfile, psi: Wavepacket, spec: DetectorSpectrum, *,
                     n_k: int = 48, k_width: float = 8.0, x_width: float = 8.0,
                     t_width: float = 8.0) -> float:
    """P1 from the spacetime overlap of F with the Newton-Wigner wavefunction,

        |int dt d^3x exp(+-i e t) F(t, x) psi_NW(t, x)|^2 / (2 pi)^4,

    where (2 pi)^4 converts back to the F~ normalization used by :func:`p1`.

    psi_NW is represented on a tensor Gauss-Legendre momentum grid over
    k0 +- k_width*sigma_k (no angular reduction), the spatial integral is a
    Gauss-Legendre rule over +- x_width*s_X, and the time integral a
    Gauss-Legendre rule over t_center +- t_width*s_T.
    """
    s = psi.sigma_k
    xg, wg = np.polynomial.legendre.leggauss(n_k)
    k_axes = [psi.k0[i] + k_width * s * xg for i in range(3)]
    wk = k_width * s * wg
    K = np.stack(np.meshgrid(*k_axes, indexing="ij"), axis=-1)
    W = wk[:, None, None] * wk[None, :, None] * wk[None, None, :]
    e_k = psi.energy(np.linalg.norm(K, axis=-1))
    nw = (2 * math.pi) ** -1.5 * W * psi(K) / np.sqrt(2 * e_k)

    # spatial overlap int d^3x F_s(x) exp(i k.x); F_s is a separable Gaussian
    k_max = max(float(np.max(np.abs(a))) for a in k_axes)
    n_x = max(48, int(math.ceil(1.2 * k_max * x_width * F.s_X)) + 32)
    xx, wx = np.polynomial.legendre.leggauss(n_x)
    xx = x_width * F.s_X * xx
    wx = x_width * F.s_X * wx * np.exp(-xx * xx / (2 * F.s_X**2)) / (math.sqrt(2 * math.pi) * F.s_X)
    overlap = [np.exp(1j * np.outer(k_axes[i], xx)) @ wx for i in range(3)]
    c = nw * overlap[0][:, None, None] * overlap[1][None, :, None] * overlap[2][None, None, :]
    c = c.ravel()
    e_flat = e_k.ravel()

    e_lo, e_hi = float(e_flat.min()), float(e_flat.max())
    half = t_width * F.s_T
    total = 0.0
    for eps, mu in spec.levels:
        if mu == 0:
            continue
        for sign in (1.0, -1.0):
            w_max = max(abs(sign * eps - e_lo), abs(sign * eps - e_hi))
            n_t = int(math.ceil(0.75 * w_max * half)) + 64
            tg, wt = np.polynomial.legendre.leggauss(n_t)
            t = F.t_center + half * tg
            wt = half * wt * F.lam * F.temporal(t) * np.exp(1j * sign * eps * t)
            amp = 0j
            for blk in range(0, t.size, 64):
                ph = np.exp(-1j * np.outer(t[blk:blk + 64], e_flat))
                amp += wt[blk:blk + 64] @ (ph @ c)
            total += abs(mu) ** 2 * abs(amp) ** 2 / (2 * math.pi) ** 4
    return float(total)


def _g_of(g, k):
    if isinstance(g, SmearingProfile):
        return g.lam / (4 * math.pi**2) * np.exp(-0.5 * (k * g.s_X) ** 2)
    return np.asarray(g(k))


def _l0_of(psi_l0, k):
    if isinstance(psi_l0, Wavepacket):
        return spherical_l0_projection(psi_l0, k)
    return np.asarray(psi_l0(k))


def p1_adiabatic(g, psi_l0, spec: DetectorSpectrum, m: float = 0.0, *,
                 form: str = "printed") -> float:
    """Adiabatic-switching limit of P1, where F~(w, k) = 2 pi delta(w) g(k).

    ``g`` is a SmearingProfile (its spatial transform under the F~
    convention) or a callable k -> g(k); ``psi_l0`` is a Wavepacket or a
    callable k -> psi_{0,0}(k).

    ``form='printed'`` evaluates
    ``sum e |mu g(k_e)|^2 |psi_00(k_e)|^2 / (8 pi^2 k_e^2)`` with
    ``k_e = sqrt(e^2 - m^2)``.  ``form='derived'`` gives the long-window
    limit of :func:`p1`, ``sum e k_e^2 |mu g(k_e)|^2 |psi_00(k_e)|^2``.
    """
    if form not in ("printed", "derived"):
        raise ValueError("form must be 'printed' or 'derived'")
    total = 0.0
    for eps, mu in spec.levels:
        if eps <= m:
            raise DomainError(f"level {eps} has no on-shell momentum for mass {m}")
        k = math.sqrt(eps * eps - m * m)
        core = eps * abs(mu) ** 2 * abs(complex(np.ravel(_g_of(g, k))[0])) ** 2 * abs(complex(np.ravel(_l0_of(psi_l0, k))[0])) ** 2
        total += core / (8 * math.pi**2 * k * k) if form == "printed" else core * k * k
    return float(total)
