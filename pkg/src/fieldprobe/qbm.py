"""Oscillator detector coupled linearly to the smeared field.

The model is Gaussian and exactly solvable: every moment of the pointer
follows from the response function u(t), the solution of

    u'' + wb^2 u + (2/M) int_0^t gamma(t - s) u'(s) ds = 0,  u(0) = 0, u'(0) = 1,

with the Lorentzian dissipation kernel of the form factor exp(-k/cutoff).
For cutoff >> wb the kernel acts like a delta function and u reduces to a
damped oscillator with rate Gamma = lam^2 / (8 pi M), the value fixed by
the half-line weight int_0^inf gamma = lam^2 / (8 pi).

Moment formulas (X(t), P(t) in the Heisenberg picture)::

    <X> = -(lam/M) int_0^t u(t - s) <phi_g(s)> ds
    <P> = -lam     int_0^t u'(t - s) <phi_g(s)> ds
    <X^2> = sX^2 u'^2 + sP^2 u^2 / M^2 + (lam/M)^2 int int u u <phi_g phi_g>
    <P^2> = M^2 sX^2 u''^2 + sP^2 u'^2 + lam^2 int int u' u' <phi_g phi_g>
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.signal import fftconvolve

from .field import (FormFactor, VacuumCorrelation, Wavepacket, field_amplitude,
                    form_factor_amplitude)
from .numerics import (DomainError, LorentzianKernel, ResponseKernel, TimeGrid,
                       _cell_moments, integrate_interval, integrate_semi_infinite,
                       solve_volterra)

__all__ = [
    "MomentTrace",
    "OneParticleCorrelation",
    "QbmDetector",
    "antenna_residual",
    "dissipation_kernel",
    "h_monochromatic",
    "markovian_response",
    "mean_trace",
    "memory_kernel",
    "moment_trace",
    "resonance_fwhm",
    "signal_h",
    "u_closed_form",
    "u_numeric",
    "vacuum_noise",
    "variance_trace",
]

_CRITICAL_TOL = 1e-9


@dataclass(frozen=True)
class QbmDetector:
    M: float
    omega0: float
    lam: float
    cutoff: FormFactor

    def __post_init__(self):
        if not isinstance(self.cutoff, FormFactor):
            object.__setattr__(self, "cutoff", FormFactor(float(self.cutoff)))
        if not (self.M > 0 and self.omega0 > 0):
            raise DomainError("QbmDetector: M and omega0 must be positive")
        if self.lam < 0:
            raise DomainError("QbmDetector: lambda must be >= 0")
        if self.omega_bar_sq <= 0:
            raise DomainError(
                f"renormalized frequency squared omega_bar^2 = omega0^2 - 2 gamma(0)/M = "
                f"{self.omega_bar_sq:.6g} must be > 0; lower lambda or the cutoff")

    @classmethod
    def from_rates(cls, M: float, omega_bar: float, Gamma: float, cutoff: float) -> "QbmDetector":
        """Build from the renormalized frequency and damping rate."""
        if not (omega_bar > 0 and Gamma >= 0):
            raise DomainError("omega_bar must be > 0 and Gamma >= 0")
        lam = math.sqrt(8 * math.pi * M * Gamma)
        gamma0 = lam**2 * cutoff / (4 * math.pi**2)
        return cls(M, math.sqrt(omega_bar**2 + 2 * gamma0 / M), lam, FormFactor(cutoff))

    @property
    def gamma0(self) -> float:
        return self.lam**2 * self.cutoff.cutoff / (4 * math.pi**2)

    @property
    def omega_bar_sq(self) -> float:
        return self.omega0**2 - 2 * self.gamma0 / self.M

    @property
    def omega_bar(self) -> float:
        return math.sqrt(self.omega_bar_sq)

    @property
    def Gamma(self) -> float:
        return self.lam**2 / (8 * math.pi * self.M)


@dataclass(frozen=True, eq=False)
class MomentTrace:
    grid: TimeGrid
    meanX: np.ndarray
    meanP: np.ndarray
    varX: np.ndarray
    varP: np.ndarray
    energy: np.ndarray

    def __post_init__(self):
        if np.any(self.varX < 0) or np.any(self.varP < 0):
            raise DomainError("negative variance in moment trace")


def dissipation_kernel(det: QbmDetector, t):
    L = det.cutoff.cutoff
    t = np.asarray(t, dtype=float)
    return det.lam**2 / (4 * math.pi**2) * L / (1 + (L * t) ** 2)


def memory_kernel(det: QbmDetector) -> LorentzianKernel:
    return LorentzianKernel(det.lam**2 / (4 * math.pi**2), det.cutoff.cutoff)


def _is_critical(det: QbmDetector) -> bool:
    wb = det.omega_bar
    return abs(det.Gamma - wb) < _CRITICAL_TOL * wb


def _damped(det: QbmDetector, t, *, allow_critical: bool = False):
    """(u, u', u'') of the Markovian damped oscillator."""
    G, wb2 = det.Gamma, det.omega_bar_sq
    t = np.asarray(t, dtype=float)
    decay = np.exp(-G * t)
    if _is_critical(det):
        if not allow_critical:
            raise DomainError("critical damping Gamma = omega_bar: use the limit t*exp(-Gamma t) "
                              "or the numeric solver")
        u = t * decay
        du = (1 - G * t) * decay
    elif G < math.sqrt(wb2):
        w = math.sqrt(wb2 - G * G)
        s, c = np.sin(w * t), np.cos(w * t)
        u = decay * s / w
        du = decay * (c - G * s / w)
    else:
        w = math.sqrt(G * G - wb2)
        # e^{-Gt} sinh(wt) = (e^{-(G-w)t} - e^{-(G+w)t}) / 2, stable for large t
        slow, fast = np.exp(-(G - w) * t), np.exp(-(G + w) * t)
        u = (slow - fast) / (2 * w)
        du = ((w - G) * slow + (G + w) * fast) / (2 * w)
    ddu = -2 * G * du - wb2 * u
    return u, du, ddu


def u_closed_form(det: QbmDetector, t):
    return _damped(det, t)[0]


def markovian_response(det: QbmDetector, grid: TimeGrid) -> ResponseKernel:
    """Closed-form Markovian response on a grid; the critical case uses t exp(-Gamma t)."""
    u, du, ddu = _damped(det, grid.times - grid.t0, allow_critical=True)
    return ResponseKernel(grid, u, du, ddu)


def u_numeric(det: QbmDetector, grid: TimeGrid, *, check_tol: float | None = None) -> ResponseKernel:
    """Solve the integro-differential equation with the Lorentzian kernel."""
    return solve_volterra(memory_kernel(det), det.omega_bar_sq, det.M, grid, check_tol=check_tol)


def _check_samples(kernel: ResponseKernel, series: np.ndarray, name: str) -> np.ndarray:
    series = np.asarray(series)
    if series.shape != (kernel.grid.n,):
        raise DomainError(f"{name} has shape {series.shape}, expected ({kernel.grid.n},)")
    return series


def _trap_conv(f: np.ndarray, g: np.ndarray, h: float) -> np.ndarray:
    """Trapezoid values of int_0^{t_i} f(t_i - s) g(s) ds for every i."""
    full = fftconvolve(f, g)[: f.size]
    return h * (full - 0.5 * f * g[0] - 0.5 * f[0] * g)


def mean_trace(det: QbmDetector, kernel: ResponseKernel, field_mean) -> tuple[np.ndarray, np.ndarray]:
    phi = _check_samples(kernel, field_mean, "field_mean").astype(float)
    h = kernel.grid.dt
    meanX = -(det.lam / det.M) * _trap_conv(kernel.u, phi, h)
    meanP = -det.lam * _trap_conv(kernel.du, phi, h)
    return meanX, meanP


class OneParticleCorrelation:
    """<psi|phi_g(t1) phi_g(t2)|psi> for a one-particle state:
    the vacuum correlator plus 2 Re[conj(Phi(t1)) Phi(t2)], where
    Phi(t) = <0|phi_g(t)|psi> (see :func:`fieldprobe.field.field_amplitude`)."""

    stationary = False

    def __init__(self, vacuum: VacuumCorrelation, amplitude: Callable[[np.ndarray], np.ndarray]):
        self.vacuum = vacuum
        self.amplitude = amplitude

    def __call__(self, t1, t2):
        a1 = np.asarray(self.amplitude(np.atleast_1d(t1)))
        a2 = np.asarray(self.amplitude(np.atleast_1d(t2)))
        return self.vacuum(t1, t2) + 2 * np.real(np.conj(a1) * a2)


def _stationary_double(f: np.ndarray, corr: VacuumCorrelation, h: float) -> np.ndarray:
    """S_i = int_0^{t_i} int_0^{t_i} f(a) f(b) Re C(a - b) da db for every i.

    Uses dS/dt = 2 f(t) J(t) with J(t) = int_0^t f(b) R(t - b) db, both by
    product integration against piecewise-linear f.  The endpoint spike
    f(0) R1(t) of J is integrated with the exact moments of R1.
    """
    n = f.size
    tau = h * np.arange(n + 1)
    r1, r2, r3 = corr.antiderivatives(tau)
    A, B = _cell_moments(r1, r2, h)
    c = A - B
    P = fftconvolve(f, c)[:n]
    Q = fftconvolve(f, B)[:n]
    J = np.zeros(n)
    J[1:] = P[1:] - c[1:n] * f[0] + Q[:-1]
    rem = J - f[0] * r1[:n]
    # spike part: 2 f(0) int_0^t f(s) R1(s) ds with R1 moments (R2, R3)
    A1, B1 = _cell_moments(r2, r3, h)
    cells = f[:-1] * (A1[: n - 1] - B1[: n - 1]) + f[1:] * B1[: n - 1]
    spike = np.concatenate(([0.0], np.cumsum(cells)))
    smooth_integrand = f * rem
    smooth = np.concatenate(([0.0], np.cumsum(0.5 * h * (smooth_integrand[1:] + smooth_integrand[:-1]))))
    return 2 * f[0] * spike + 2 * smooth


def _dense_double(f: np.ndarray, corr, times: np.ndarray, h: float, indices, herm_tol: float):
    C = np.asarray(corr(times[:, None], times[None, :]), dtype=complex)
    scale = float(np.max(np.abs(C))) or 1.0
    if np.max(np.abs(C - C.conj().T)) > herm_tol * scale:
        raise DomainError("correlation samples are not Hermitian")
    R = C.real
    out = np.full(times.size, np.nan)
    for i in indices:
        if i == 0:
            out[i] = 0.0
            continue
        w = np.full(i + 1, h)
        w[0] = w[-1] = 0.5 * h
        g = w * f[i::-1]
        out[i] = g @ R[: i + 1, : i + 1] @ g
    return out


def variance_trace(det: QbmDetector, kernel: ResponseKernel, correlation, *,
                   sigma_X: float = 0.0, sigma_P: float = 0.0, means=None,
                   indices=None, herm_tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """(varX, varP) on kernel.grid.

    ``correlation`` is a :class:`VacuumCorrelation` (fast stationary path),
    a :class:`OneParticleCorrelation`, or any Hermitian callable C(t1, t2),
    which is sampled densely and integrated by the 2-D trapezoid rule at
    ``indices`` (all points when None).  ``means`` = (meanX, meanP) are
    subtracted when given.
    """
    u, du, ddu = kernel.u, kernel.du, kernel.ddu
    h = kernel.grid.dt
    times = kernel.grid.times
    lam, M = det.lam, det.M

    def double(f):
        if isinstance(correlation, VacuumCorrelation):
            return _stationary_double(f, correlation, h)
        if isinstance(correlation, OneParticleCorrelation):
            base = _stationary_double(f, correlation.vacuum, h)
            amp = np.asarray(correlation.amplitude(times), dtype=complex)
            # int_0^t f(t - s) Phi(s) ds for every t
            conv = _trap_conv(f.astype(complex), amp, h)
            return base + 2 * np.abs(conv) ** 2
        idx = range(times.size) if indices is None else indices
        return _dense_double(f, correlation, times, h, idx, herm_tol)

    x2 = sigma_X**2 * du**2 + (sigma_P / M) ** 2 * u**2 + (lam / M) ** 2 * double(u)
    p2 = (M * sigma_X * ddu) ** 2 + (sigma_P * du) ** 2 + lam**2 * double(du)
    if means is not None:
        x2 = x2 - np.asarray(means[0]) ** 2
        p2 = p2 - np.asarray(means[1]) ** 2
    return x2, p2


def moment_trace(det: QbmDetector, kernel: ResponseKernel, *, field_mean=None,
                 correlation=None, sigma_X: float = 0.0, sigma_P: float = 0.0) -> MomentTrace:
    n = kernel.grid.n
    if field_mean is None:
        mx = mp = np.zeros(n)
    else:
        mx, mp = mean_trace(det, kernel, field_mean)
    if correlation is None:
        correlation = VacuumCorrelation(det.cutoff)
    x2, p2 = variance_trace(det, kernel, correlation, sigma_X=sigma_X, sigma_P=sigma_P)
    vx, vp = x2 - mx**2, p2 - mp**2
    wb2 = det.omega_bar_sq
    energy = vp / (2 * det.M) + det.M * wb2 * vx / 2 + mp**2 / (2 * det.M) + det.M * wb2 * mx**2 / 2
    return MomentTrace(kernel.grid, mx, mp, vx, vp, energy)


def vacuum_noise(det: QbmDetector, *, form: str = "derived") -> float:
    """Long-time vacuum energy of the oscillator,

        (Gamma/pi) int_0^inf dk k |g~|^2 (wb^2 + k^2) / ((wb^2 - k^2)^2 + 4 Gamma^2 k^2).

    ``form='printed'`` returns the same integral with prefactor 2 Gamma / pi.
    """
    if form not in ("derived", "printed"):
        raise ValueError("form must be 'derived' or 'printed'")
    G, wb2 = det.Gamma, det.omega_bar_sq
    if G == 0:
        return 0.0
    wb = math.sqrt(wb2)

    def integrand(k):
        return k * det.cutoff.g2(k) * (wb2 + k * k) / ((wb2 - k * k) ** 2 + 4 * G * G * k * k)

    # resonant window resolved on [0, kc]; the slowly decaying tail on [kc, inf)
    kc = 2 * wb + 20 * G
    near = integrate_interval(integrand, 0.0, kc, tol=1e-300, rtol=1e-12, n_panels=16,
                              breakpoints=(max(wb - 10 * G, 0.0), wb, wb + 10 * G))
    far = integrate_semi_infinite(lambda x: integrand(kc + x), max(det.cutoff.cutoff, kc),
                                  tol=1e-300, rtol=1e-12)
    val = near + far
    pref = G / math.pi if form == "derived" else 2 * G / math.pi
    return pref * float(val)


def _u_tilde(det: QbmDetector, e):
    """int_0^inf u(t) exp(i e t) dt for the Markovian u."""
    return 1.0 / (det.omega_bar_sq - e * e - 2j * det.Gamma * e)


def signal_h(det: QbmDetector, psi: Wavepacket, t, *, form: str = "derived"):
    """One-particle part of the long-time oscillator energy,

        8 pi Gamma (|int dk_bar psi0 g~ e u~(e) exp(-i e t)/sqrt(2e)|^2
                    + wb^2 |int dk_bar psi0 g~ u~(e) exp(-i e t)/sqrt(2e)|^2)

    with u~(e) = 1 / (wb^2 - e^2 - 2 i Gamma e).  ``form='printed'`` instead
    evaluates 8 pi Gamma |int dk_bar psi0 g~ (wb^2 + e^2)/(wb^2 + (Gamma - i e)^2)
    exp(-i e t)/sqrt(2e)|^2.
    """
    if psi.m != 0:
        raise DomainError("signal_h assumes a massless field")
    if form not in ("derived", "printed"):
        raise ValueError("form must be 'derived' or 'printed'")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    wb2, G = det.omega_bar_sq, det.Gamma
    if form == "derived":
        a1 = field_amplitude(psi, lambda k: form_factor_amplitude(det.cutoff, k) * k * _u_tilde(det, k), t_arr)
        a2 = field_amplitude(psi, lambda k: form_factor_amplitude(det.cutoff, k) * _u_tilde(det, k), t_arr)
        out = 8 * math.pi * G * (np.abs(a1) ** 2 + wb2 * np.abs(a2) ** 2)
    else:
        def g_eff(k):
            return form_factor_amplitude(det.cutoff, k) * (wb2 + k * k) / (wb2 + (G - 1j * k) ** 2)
        out = 8 * math.pi * G * np.abs(field_amplitude(psi, g_eff, t_arr)) ** 2
    return float(out[0]) if np.ndim(t) == 0 else out


def h_monochromatic(det: QbmDetector, epsilon0, nw_density):
    """Monochromatic limit of :func:`signal_h` (Breit-Wigner weight times the
    Newton-Wigner density at the detector)."""
    e = np.asarray(epsilon0, dtype=float)
    wb2, G = det.omega_bar_sq, det.Gamma
    bw = 8 * math.pi * G * det.cutoff.g2(e) * (e * e + wb2) / ((wb2 - e * e) ** 2 + 4 * G * G * e * e)
    return bw * nw_density


def resonance_fwhm(det: QbmDetector) -> float:
    """Full width at half maximum of the epsilon0-profile of h_monochromatic.

    Returns inf when the profile has no interior peak that falls to half
    height on both sides (the resonance concept has degenerated).
    """
    wb = det.omega_bar
    G = det.Gamma

    def prof(e):
        return float(h_monochromatic(det, e, 1.0))

    # locate the peak on a grid refined around wb
    width = max(G, 1e-6 * wb)
    grid = np.unique(np.concatenate([
        np.linspace(0.0, 4 * wb + 20 * width, 4001),
        wb + width * np.linspace(-20, 20, 4001),
    ]))
    grid = grid[grid >= 0]
    vals = h_monochromatic(det, grid, 1.0)
    i = int(np.argmax(vals))
    if i == 0 or i == grid.size - 1:
        return math.inf
    lo, hi = grid[i - 1], grid[i + 1]
    e_pk = float(_golden_max(prof, lo, hi))
    half = 0.5 * prof(e_pk)
    left = np.nonzero(vals[:i] < half)[0]
    right = np.nonzero(vals[i:] < half)[0]
    if left.size == 0 or right.size == 0:
        return math.inf
    a = float(grid[left[-1]])
    b = float(grid[i + right[0]])
    e_l = brentq(lambda e: prof(e) - half, a, e_pk, xtol=1e-14 * wb, rtol=1e-14)
    e_r = brentq(lambda e: prof(e) - half, e_pk, b, xtol=1e-14 * wb, rtol=1e-14)
    return e_r - e_l


def _golden_max(f, a: float, b: float, tol: float = 1e-13) -> float:
    res = minimize_scalar(lambda x: -f(x), bounds=(a, b), method="bounded",
                          options={"xatol": tol * max(1.0, abs(b))})
    return res.x


def antenna_residual(det: QbmDetector, kernel: ResponseKernel, field_mean, *, gain=None) -> dict:
    """Compare <P(t)> with -gain * <phi_g(t)> at the field's peak.

    ``gain`` defaults to lam / (2 Gamma), the strong-coupling value of
    lam * int_0^inf u'(t) dt.  Returns the relative residual together with
    the peak time and values.
    """
    phi = _check_samples(kernel, field_mean, "field_mean").astype(float)
    if gain is None:
        gain = det.lam / (2 * det.Gamma)
    _, meanP = mean_trace(det, kernel, phi)
    i = int(np.argmax(np.abs(phi)))
    pred = -gain * phi[i]
    return {
        "residual": abs(meanP[i] - pred) / abs(pred),
        "t_peak": float(kernel.grid.times[i]),
        "meanP": float(meanP[i]),
        "predicted": float(pred),
        "field": float(phi[i]),
    }
