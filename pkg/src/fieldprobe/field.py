"""Free scalar field ingredients.

Conventions, fixed once for the whole package:

* momentum measure ``dk_bar = d^3k / (2 pi)^{3/2}``; one-particle
  amplitudes are normalized as ``int d^3k |psi0(k)|^2 = 1``;
* Fourier transform ``F~(w, k) = (2 pi)^-2 int dt d^3x F(t, x) exp(i w t - i k.x)``;
* the smeared field of a form factor g~ has vacuum correlator
  ``<phi_g(t') phi_g(t'')> = (1/4 pi^2) int dk k^2 |g~(k)|^2 exp(-i e_k tau) / e_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .numerics import integrate_semi_infinite

__all__ = [
    "FormFactor",
    "SmearingProfile",
    "VacuumCorrelation",
    "Wavepacket",
    "coherent_field_mean",
    "dispersion",
    "field_amplitude",
    "form_factor_amplitude",
    "newton_wigner",
    "newton_wigner_grid",
    "radial_transform",
    "smearing_fourier",
    "spherical_l0_projection",
    "vacuum_two_point_massless",
    "vacuum_two_point_smeared",
]

_INV_2PI_32 = (2 * math.pi) ** -1.5
_SQRT_4PI = math.sqrt(4 * math.pi)


def dispersion(k, m: float = 0.0):
    """Relativistic energy e_k = sqrt(k^2 + m^2)."""
    return np.sqrt(np.asarray(k, dtype=float) ** 2 + m * m)


@dataclass(frozen=True)
class SmearingProfile:
    """Gaussian spacetime smearing

        F(t, x) = lam / (4 pi^2 s_X^3 s_T) exp(-x^2/(2 s_X^2) - (t - t_center)^2/(2 s_T^2))

    normalized so that the spacetime integral of F equals ``lam``.
    """

    lam: float
    s_X: float
    s_T: float
    t_center: float = 0.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("SmearingProfile: coupling must be >= 0")
        if not (self.s_X > 0 and self.s_T > 0):
            raise ValueError("SmearingProfile: widths must be positive")

    def shifted(self, t_center: float) -> "SmearingProfile":
        return SmearingProfile(self.lam, self.s_X, self.s_T, t_center)

    def temporal(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-((t - self.t_center) ** 2) / (2 * self.s_T**2)) / (
            math.sqrt(2 * math.pi) * self.s_T)

    def spatial(self, r):
        r = np.asarray(r, dtype=float)
        return np.exp(-(r**2) / (2 * self.s_X**2)) / ((2 * math.pi) ** 1.5 * self.s_X**3)

    def __call__(self, t, r):
        return self.lam * self.temporal(t) * self.spatial(r)


def smearing_fourier(F: SmearingProfile, omega, k):
    """F~(w, k) of the Gaussian profile under the package convention."""
    omega = np.asarray(omega, dtype=float)
    k = np.asarray(k, dtype=float)
    val = F.lam / (4 * math.pi**2) * np.exp(-0.5 * (k * F.s_X) ** 2 - 0.5 * (omega * F.s_T) ** 2)
    if F.t_center != 0.0:
        return val * np.exp(1j * omega * F.t_center)
    return val + 0j


@dataclass(frozen=True)
class FormFactor:
    """Spatial form factor with |g~(k)|^2 = exp(-k / cutoff)."""

    cutoff: float

    def __post_init__(self):
        if not self.cutoff > 0:
            raise ValueError("FormFactor: cutoff must be positive")

    def g2(self, k):
        return np.exp(-np.asarray(k, dtype=float) / self.cutoff)

    def g(self, k):
        return np.exp(-0.5 * np.asarray(k, dtype=float) / self.cutoff)


def form_factor_amplitude(g, k):
    """g~(k) for a FormFactor, or for the spatial part of a SmearingProfile."""
    if isinstance(g, FormFactor):
        return g.g(k)
    if isinstance(g, SmearingProfile):
        return np.exp(-0.5 * (np.asarray(k, dtype=float) * g.s_X) ** 2)
    return np.asarray(g(k))


# ---------------------------------------------------------------------------
# Wavepackets

def _sinhc_scaled(z: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """exp(-shift) * sinh(z) / z for complex z, without overflow."""
    z = np.asarray(z, dtype=complex)
    z = np.where(z.real < 0, -z, z)
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    big = (np.exp(zs - shift) - np.exp(-zs - shift)) / (2 * zs)
    series = np.exp(-shift) * (1 + z * z / 6)
    return np.where(small, series, big)


@dataclass(frozen=True, eq=False)
class Wavepacket:
    """Pure one-particle momentum amplitude psi0(k).

    Use :meth:`gaussian` for the default family
    ``psi0 ~ exp(-|k - k0|^2 / (4 sigma_k^2)) exp(-i k.L)``, which has a closed
    form l = 0 projection.  A custom ``amplitude`` callable maps an array
    of 3-momenta (shape (..., 3)) to complex values; it must be normalized
    by the caller.
    """

    amplitude: Callable[[np.ndarray], np.ndarray]
    k0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sigma_k: float = 1.0
    L: np.ndarray = field(default_factory=lambda: np.zeros(3))
    m: float = 0.0
    _gaussian: bool = False

    def __post_init__(self):
        if not self.sigma_k > 0:
            raise ValueError("Wavepacket: sigma_k must be positive")
        if self.m < 0:
            raise ValueError("Wavepacket: mass must be >= 0")
        object.__setattr__(self, "k0", np.asarray(self.k0, dtype=float))
        object.__setattr__(self, "L", np.asarray(self.L, dtype=float))

    @classmethod
    def gaussian(cls, k0, sigma_k: float, L=(0.0, 0.0, 0.0), m: float = 0.0) -> "Wavepacket":
        if not sigma_k > 0:
            raise ValueError("Wavepacket: sigma_k must be positive")
        k0 = np.asarray(k0, dtype=float)
        L = np.asarray(L, dtype=float)
        norm = (2 * math.pi * sigma_k**2) ** -0.75

        def amp(kv):
            kv = np.asarray(kv, dtype=float)
            d2 = np.sum((kv - k0) ** 2, axis=-1)
            return norm * np.exp(-d2 / (4 * sigma_k**2) - 1j * (kv @ L))

        return cls(amp, k0, sigma_k, L, m, True)

    @classmethod
    def toward_origin(cls, k0: float, sigma_k: float, distance: float, m: float = 0.0):
        """Gaussian packet moving along +z from z = -distance."""
        return cls.gaussian((0.0, 0.0, k0), sigma_k, (0.0, 0.0, -distance), m)

    @classmethod
    def custom(cls, amplitude, k0, sigma_k: float, L=(0.0, 0.0, 0.0), m: float = 0.0, *,
               normalize: bool = True) -> "Wavepacket":
        """Wrap an arbitrary amplitude; ``k0`` and ``sigma_k`` describe where
        its radial support sits (|k| within |k0| +- 10 sigma_k)."""
        pk = cls(amplitude, k0, sigma_k, L, m)
        if not normalize:
            return pk
        c = 1.0 / math.sqrt(pk.norm_squared())
        return cls(lambda kv: c * amplitude(kv), pk.k0, sigma_k, pk.L, m)

    def norm_squared(self, *, n_theta: int = 200, n_phi: int = 128) -> float:
        """int d^3k |psi0(k)|^2 by radial GK15 times an angular product rule."""
        lo, hi = self.radial_support()
        n, w = _angular_rule(n_theta, n_phi)
        axis = self.k0 / np.linalg.norm(self.k0) if np.any(self.k0) else np.array([0.0, 0.0, 1.0])
        n = n @ _rotation_to(axis).T

        def radial(k):
            vals = np.abs(self(k[:, None, None] * n[None, :, :])) ** 2
            return k * k * (vals @ w)

        return float(integrate_semi_infinite(radial, self.sigma_k, tol=1e-300, rtol=1e-12,
                                             breakpoints=(lo, hi)))

    def __call__(self, kv):
        return self.amplitude(kv)

    def energy(self, k):
        return dispersion(k, self.m)

    def radial_support(self, width: float = 10.0) -> tuple[float, float]:
        """Range of |k| that holds the packet, used as quadrature breakpoints."""
        c = float(np.linalg.norm(self.k0))
        return max(0.0, c - width * self.sigma_k), c + width * self.sigma_k

    def l0(self, k):
        """Closed-form l = 0 projection; only valid for the Gaussian family."""
        if not self._gaussian:
            raise TypeError("closed-form projection needs a Gaussian packet")
        k = np.asarray(k, dtype=float)
        s2 = self.sigma_k**2
        norm = (2 * math.pi * s2) ** -0.75
        k0sq = float(self.k0 @ self.k0)
        Lsq = float(self.L @ self.L)
        k0L = float(self.k0 @ self.L)
        # b = k (k0/(2 s2) - i L); int dOmega exp(b.n) = 4 pi sinh(z)/z, z^2 = b.b
        zsq = k * k * (k0sq / (4 * s2 * s2) - Lsq - 1j * k0L / s2)
        z = np.sqrt(zsq.astype(complex))
        shift = (k * k + k0sq) / (4 * s2)
        return _SQRT_4PI * norm * _sinhc_scaled(z, shift)


def _angular_rule(n_theta: int, n_phi: int):
    x, w = np.polynomial.legendre.leggauss(n_theta)
    phi = 2 * math.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1 - x * x)
    n = np.stack([
        (st[:, None] * np.cos(phi)[None, :]).ravel(),
        (st[:, None] * np.sin(phi)[None, :]).ravel(),
        np.repeat(x, n_phi),
    ], axis=-1)
    wts = (w[:, None] * np.full(n_phi, 2 * math.pi / n_phi)[None, :]).ravel()
    return n, wts


def spherical_l0_projection(psi: Wavepacket, k, *, n_theta: int = 400, n_phi: int = 64,
                            method: str = "auto"):
    """psi_{0,0}(k) = int dOmega Y00* psi0(k n).

    ``method='auto'`` uses the closed form for Gaussian packets and angular
    quadrature (Gauss-Legendre in cos(theta), trapezoid in phi) otherwise.
    The quadrature axis is aligned with the packet's k0 so that narrow
    packets are resolved.
    """
    if method == "auto":
        method = "closed" if psi._gaussian else "quadrature"
    if method == "closed":
        return psi.l0(k)
    k = np.atleast_1d(np.asarray(k, dtype=float))
    n, w = _angular_rule(n_theta, n_phi)
    axis = psi.k0 / np.linalg.norm(psi.k0) if np.any(psi.k0) else np.array([0.0, 0.0, 1.0])
    n = n @ _rotation_to(axis).T
    vals = psi(k[:, None, None] * n[None, :, :])
    return (vals @ w) / _SQRT_4PI


def _rotation_to(axis: np.ndarray) -> np.ndarray:
    """Rotation matrix sending +z to ``axis``."""
    z = np.array([0.0, 0.0, 1.0])
    v = np.cross(z, axis)
    c = float(z @ axis)
    if np.linalg.norm(v) < 1e-15:
        return np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx / (1 + c)


def radial_transform(psi: Wavepacket, weight: Callable[[np.ndarray], np.ndarray], *,
                     rtol: float = 1e-10, scale: float | None = None,
                     breakpoints=()):
    """int dk_bar psi0(k) W(|k|) for an isotropic weight W.

    Only the l = 0 component of psi0 survives the angular integral, so this
    reduces to ``(2 pi)^{-3/2} sqrt(4 pi) int k^2 dk W(k) psi_{0,0}(k)``.
    ``weight`` may return trailing axes (e.g. one per time sample).

    Accuracy is ``rtol`` relative to the result, with an absolute floor of
    ``1e-3 * rtol`` times the Cauchy-Schwarz bound
    ``(2 pi)^{-3/2} sup|W| sqrt(shell volume)`` for a normalized packet.
    Without the floor a result that cancels to roundoff (an l = 1 packet,
    say) would be refined forever.
    """
    lo, hi = psi.radial_support()
    s = psi.sigma_k if scale is None else min(scale, psi.sigma_k)
    probe = np.abs(np.asarray(weight(np.linspace(max(lo, 1e-12), hi, 65))))
    shell = 4 * math.pi * (hi**3 - lo**3) / 3
    atol = 1e-3 * rtol * _INV_2PI_32 * float(np.max(probe)) * math.sqrt(shell) / _SQRT_4PI

    def integrand(k):
        w = np.asarray(weight(k))
        base = k * k * spherical_l0_projection(psi, k)
        return base.reshape((-1,) + (1,) * (w.ndim - 1)) * w

    val = integrate_semi_infinite(integrand, s, tol=max(atol, 1e-300), rtol=rtol,
                                  breakpoints=(lo, float(np.linalg.norm(psi.k0)), hi,
                                               *breakpoints))
    return _INV_2PI_32 * _SQRT_4PI * val


def field_amplitude(psi: Wavepacket, g, t, *, rtol: float = 1e-10):
    """<0| phi_g(t) |psi> at the detector position x = 0.

    With ``g=None`` this is the Newton-Wigner wavefunction at the origin.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))

    def weight(k):
        e = psi.energy(k)
        gk = 1.0 if g is None else form_factor_amplitude(g, k)
        amp = np.asarray(gk / np.sqrt(2 * e))
        return amp[:, None] * np.exp(-1j * e[:, None] * t[None, :])

    return radial_transform(psi, weight, rtol=rtol)


def newton_wigner(psi: Wavepacket, t, x=(0.0, 0.0, 0.0), *, n_k: int = 48,
                  width: float = 8.0):
    """psi_NW(t, x) = int dk_bar psi0(k) exp(i k.x - i e_k t) / sqrt(2 e_k).

    At the origin the angular integral is done analytically (radial
    quadrature over psi_{0,0}).  Elsewhere a tensor Gauss-Legendre rule
    over the box k0 +- width*sigma_k is used.
    """
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        out = field_amplitude(psi, None, t)
        return out[0] if np.ndim(t) == 0 else out
    t = np.atleast_1d(np.asarray(t, dtype=float))
    xg, wg = np.polynomial.legendre.leggauss(n_k)
    s = psi.sigma_k
    axes = [psi.k0[i] + width * s * xg for i in range(3)]
    w1 = width * s * wg
    K = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    W = (w1[:, None, None] * w1[None, :, None] * w1[None, None, :]).ravel()
    e = psi.energy(np.linalg.norm(K, axis=-1))
    base = W * psi(K) / np.sqrt(2 * e) * np.exp(1j * (K @ x))
    out = _INV_2PI_32 * (np.exp(-1j * np.outer(t, e)) @ base)
    return out[0] if out.size == 1 else out


def newton_wigner_grid(psi: Wavepacket, t: float, *, n: int = 64, width: float = 8.0):
    """psi_NW(t, .) on a periodic 3-D position grid via FFT.

    Returns (x_axis, values, dx) where ``values[i, j, l]`` sits at
    (x_axis[0][i], x_axis[1][j], x_axis[2][l]).  The window is centred on
    the packet's classical position at time t.
    """
    s = psi.sigma_k
    dk = 2 * width * s / n
    # cell-centred so that k = 0 (where 1/sqrt(2 e) blows up) is never a node
    k_axes = [psi.k0[i] - width * s + dk * (np.arange(n) + 0.5) for i in range(3)]
    K = np.stack(np.meshgrid(*k_axes, indexing="ij"), axis=-1)
    kmag = np.linalg.norm(K, axis=-1)
    e = psi.energy(kmag)
    spec = psi(K) / np.sqrt(2 * e) * np.exp(-1j * e * t)
    dx = 2 * math.pi / (n * dk)
    v = psi.k0 / psi.energy(np.linalg.norm(psi.k0)) if np.any(psi.k0) else np.zeros(3)
    centre = psi.L + v * t
    x_axes = [centre[i] - 0.5 * n * dx + dx * np.arange(n) for i in range(3)]
    # psi(x_l) = dk^3 (2pi)^{-3/2} sum_j spec_j exp(i k_j x_l)
    phase0 = [np.exp(1j * k_axes[i][0] * x_axes[i]) for i in range(3)]
    shift = [np.exp(1j * dk * np.arange(n) * x_axes[i][0]) for i in range(3)]
    spec = spec * shift[0][:, None, None] * shift[1][None, :, None] * shift[2][None, None, :]
    vals = np.fft.ifftn(spec) * n**3
    vals *= phase0[0][:, None, None] * phase0[1][None, :, None] * phase0[2][None, None, :]
    vals *= dk**3 * _INV_2PI_32
    return x_axes, vals, dx


def coherent_field_mean(alpha: Wavepacket, g, t, *, amplitude: complex = 1.0):
    """<phi_g(t)> at x = 0 in the coherent state with amplitude
    ``amplitude * alpha(k)``: ``2 Re int dk_bar g~ alpha exp(-i e t) / sqrt(2 e)``."""
    val = amplitude * field_amplitude(alpha, g, t)
    out = 2.0 * val.real
    return float(out[0]) if np.ndim(t) == 0 else out


# ---------------------------------------------------------------------------
# Vacuum correlations

def vacuum_two_point_smeared(g: FormFactor, tau, m: float = 0.0, *, rtol: float = 1e-10):
    """<0|phi_g(t') phi_g(t'')|0> with tau = t' - t'', by quadrature."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))

    def integrand(k):
        e = dispersion(k, m)
        return (k * k * g.g2(k) / e)[:, None] * np.exp(-1j * np.outer(e, tau))

    scale = g.cutoff
    if np.any(tau):
        scale = min(scale, 1.0 / float(np.max(np.abs(tau))))
    val = integrate_semi_infinite(integrand, scale, tol=1e-300, rtol=rtol,
                                  max_intervals=200000) / (4 * math.pi**2)
    return complex(val[0]) if val.size == 1 else val


def vacuum_two_point_massless(g: FormFactor, tau):
    """Closed form of the massless correlator: 1 / (4 pi^2 (1/cutoff + i tau)^2)."""
    tau = np.asarray(tau, dtype=float)
    return 1.0 / (4 * math.pi**2 * (1.0 / g.cutoff + 1j * tau) ** 2)


class VacuumCorrelation:
    """Stationary massless vacuum correlator of phi_g.

    Callable as C(t1, t2).  Also exposes the real (symmetrized) part and
    its first three antiderivatives, which the moment integrals use for
    exact product integration across the 1/cutoff spike at tau = 0.
    """

    stationary = True

    def __init__(self, g: FormFactor):
        self.g = g
        self.a = 1.0 / g.cutoff

    def __call__(self, t1, t2):
        return vacuum_two_point_massless(self.g, np.asarray(t1) - np.asarray(t2))

    def real_part(self, tau):
        tau = np.asarray(tau, dtype=float)
        a2 = self.a**2
        return (a2 - tau**2) / (4 * math.pi**2 * (a2 + tau**2) ** 2)

    def antiderivatives(self, tau):
        tau = np.asarray(tau, dtype=float)
        a = self.a
        r1 = tau / (4 * math.pi**2 * (a * a + tau * tau))
        lg = np.log1p((tau / a) ** 2)
        r2 = lg / (8 * math.pi**2)
        r3 = (tau * lg - 2 * tau + 2 * a * np.arctan(tau / a)) / (8 * math.pi**2)
        return r1, r2, r3
