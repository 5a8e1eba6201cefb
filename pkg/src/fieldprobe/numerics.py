"""Special functions and quadrature shared by the detector models.

Natural units (hbar = c = 1) throughout.  Everything here is a pure
function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "AccuracyError",
    "ConvergenceError",
    "DomainError",
    "LorentzianKernel",
    "MemoryKernel",
    "ResponseKernel",
    "TimeGrid",
    "dawson",
    "integrate_interval",
    "integrate_semi_infinite",
    "solve_volterra",
]


class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


class ConvergenceError(RuntimeError):
    """Adaptive quadrature ran out of budget.

    The last estimate and its error bound are kept on the exception so
    callers can decide whether a partial answer is usable.
    """

    def __init__(self, message: str, estimate, error: float):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class AccuracyError(RuntimeError):
    """Time step too coarse: step-halving disagreement exceeds tolerance."""

    def __init__(self, message: str, discrepancy: float):
        super().__init__(message)
        self.discrepancy = discrepancy


# ---------------------------------------------------------------------------
# Dawson function

_DAWSON_CROSSOVER = 5.0


def _dawson_series(x: np.ndarray) -> np.ndarray:
    # e^{-x^2} sum x^{2n+1} / (n! (2n+1)); all terms positive, no cancellation
    x2 = x * x
    a = x.copy()
    total = x.copy()
    n = 0
    while n < 400:
        n += 1
        a = a * x2 / n
        term = a / (2 * n + 1)
        total += term
        if np.all(term <= 1e-17 * np.abs(total)):
            break
    return np.exp(-x2) * total


def _dawson_asymptotic(x: np.ndarray) -> np.ndarray:
    # 1/(2x) sum (2n-1)!! / (2x^2)^n, each element truncated at its smallest term
    y = 0.5 / (x * x)
    term = np.ones_like(x)
    total = np.ones_like(x)
    active = np.ones(x.shape, dtype=bool)
    n = 0
    while np.any(active) and n < 200:
        n += 1
        nxt = term * (2 * n - 1) * y
        active &= nxt < term
        term = np.where(active, nxt, term)
        total = np.where(active, total + nxt, total)
        active &= nxt > 1e-18 * total
    return total / (2 * x)


def dawson(x):
    """Dawson function D(x) = exp(-x^2) * int_0^x exp(t^2) dt.

    Maclaurin series for |x| <= 5, asymptotic expansion beyond.  Accepts
    scalars or arrays; odd by construction.

    Raises:
        DomainError: if any input is NaN or infinite.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("dawson: argument must be finite")
    ax = np.abs(arr)
    out = np.zeros_like(ax)
    small = ax <= _DAWSON_CROSSOVER
    if np.any(small):
        out[small] = _dawson_series(ax[small])
    if np.any(~small):
        out[~small] = _dawson_asymptotic(ax[~small])
    out = np.copysign(out, arr)
    if out.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Adaptive Gauss-Kronrod quadrature on [0, inf)

# 15-point Kronrod extension of 7-point Gauss (QUADPACK qk15 constants)
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KW = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GW = np.zeros(15)
# Gauss nodes are the odd-indexed Kronrod abscissae
_GW[[1, 3, 5, 7, 9, 11, 13]] = [_WG[0], _WG[1], _WG[2], _WG[3], _WG[2], _WG[1], _WG[0]]


def _gk15(f, a: np.ndarray, b: np.ndarray):
    """Kronrod estimate and |K - G| for each interval [a_i, b_i]."""
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = (mid[:, None] + half[:, None] * _NODES[None, :]).ravel()
    fx = np.asarray(f(x))
    fx = fx.reshape((a.size, 15) + fx.shape[1:])
    w_shape = (1, 15) + (1,) * (fx.ndim - 2)
    h = half.reshape((-1,) + (1,) * (fx.ndim - 1))
    kron = h[:, 0] * np.sum(fx * _KW.reshape(w_shape), axis=1)
    gauss = h[:, 0] * np.sum(fx * _GW.reshape(w_shape), axis=1)
    diff = np.abs(kron - gauss)
    err = diff.reshape(a.size, -1).max(axis=1) if diff.ndim > 1 else diff
    return kron, err


def integrate_semi_infinite(
    f: Callable[[np.ndarray], np.ndarray],
    decay_scale: float,
    tol: float = 1e-10,
    *,
    rtol: float = 0.0,
    breakpoints: Sequence[float] = (),
    max_intervals: int = 20000,
):
    """Integrate ``f`` over [0, inf) by adaptive 15-point Gauss-Kronrod panels.

    ``f`` is called with a 1-D array of abscissae and must return an array
    whose first axis matches; extra trailing axes are integrated
    component-wise (the error bound is the max over components).

    The half-line is cut into panels of width ``decay_scale``; panels are
    appended until three in a row are negligible, after the last
    breakpoint.  Intervals are then bisected until the summed error
    estimate is below ``max(tol, rtol * |I|)``.

    Raises:
        ConvergenceError: interval budget exhausted before the target.
    """
    if not decay_scale > 0:
        raise ValueError("decay_scale must be positive")
    if tol < 0 or rtol < 0 or (tol == 0 and rtol == 0):
        raise ValueError("need tol > 0 or rtol > 0")

    cuts = sorted({0.0, *(float(p) for p in breakpoints if p > 0)})
    edges = [0.0]
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        npieces = max(1, math.ceil((hi - lo) / decay_scale))
        edges.extend(np.linspace(lo, hi, npieces + 1)[1:].tolist())
    a = np.array(edges[:-1])
    b = np.array(edges[1:])
    if a.size:
        vals, errs = _gk15(f, a, b)
    else:
        vals = errs = None

    def threshold(total):
        mag = float(np.max(np.abs(total))) if np.size(total) else 0.0
        return max(tol, rtol * mag)

    # tail panels
    start = cuts[-1]
    quiet = 0
    batch = 8
    while True:
        ta = start + decay_scale * np.arange(batch)
        tb = ta + decay_scale
        tv, te = _gk15(f, ta, tb)
        if vals is None:
            a, b, vals, errs = ta, tb, tv, te
        else:
            a = np.concatenate([a, ta])
            b = np.concatenate([b, tb])
            vals = np.concatenate([vals, tv])
            errs = np.concatenate([errs, te])
        thr = threshold(vals.sum(axis=0))
        mags = np.abs(tv).reshape(batch, -1).max(axis=1) + te
        for m in mags:
            quiet = quiet + 1 if m <= 1e-3 * thr else 0
        start = float(tb[-1])
        if quiet >= 3:
            break
        if a.size > max_intervals:
            raise ConvergenceError("tail did not decay within the panel budget",
                                   vals.sum(axis=0), float(errs.sum()))

    return _refine(f, a, b, vals, errs, threshold, max_intervals)


def _refine(f, a, b, vals, errs, threshold, max_intervals: int):
    """Bisect panels until the summed error estimate meets ``threshold``."""
    while True:
        total = vals.sum(axis=0)
        err = float(errs.sum())
        thr = threshold(total)
        if err <= thr:
            break
        if a.size >= max_intervals:
            raise ConvergenceError(
                f"no convergence with {a.size} intervals (error {err:.3e} > {thr:.3e})",
                total, err)
        # bisect everything carrying more than its fair share of the budget
        pick = errs > thr / a.size
        pick |= errs >= errs.max()
        mid = 0.5 * (a[pick] + b[pick])
        na = np.concatenate([a[pick], mid])
        nb = np.concatenate([mid, b[pick]])
        nv, ne = _gk15(f, na, nb)
        keep = ~pick
        a = np.concatenate([a[keep], na])
        b = np.concatenate([b[keep], nb])
        vals = np.concatenate([vals[keep], nv])
        errs = np.concatenate([errs[keep], ne])

    total = vals.sum(axis=0)
    if np.ndim(total) == 0:
        return complex(total) if np.iscomplexobj(total) else float(total)
    return total


def integrate_interval(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                       tol: float = 1e-10, *, rtol: float = 0.0, n_panels: int = 8,
                       breakpoints: Sequence[float] = (), max_intervals: int = 20000):
    """Adaptive GK15 integral of ``f`` over the finite interval [a, b]."""
    if not b > a:
        raise ValueError("need b > a")
    if tol < 0 or rtol < 0 or (tol == 0 and rtol == 0):
        raise ValueError("need tol > 0 or rtol > 0")
    cuts = sorted({a, b, *(float(p) for p in breakpoints if a < p < b)})
    edges = np.concatenate([np.linspace(lo, hi, n_panels + 1)[:-1]
                            for lo, hi in zip(cuts[:-1], cuts[1:])] + [[b]])
    lo, hi = edges[:-1], edges[1:]
    vals, errs = _gk15(f, lo, hi)

    def threshold(total):
        return max(tol, rtol * float(np.max(np.abs(total))))

    return _refine(f, lo, hi, vals, errs, threshold, max_intervals)


# ---------------------------------------------------------------------------
# Volterra integro-differential solver

@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t0 + i*dt, i = 0..n-1."""

    t0: float
    dt: float
    n: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("TimeGrid: dt must be positive")
        if self.n < 2:
            raise ValueError("TimeGrid: need at least two samples")

    @classmethod
    def spanning(cls, t_end: float, dt: float, t0: float = 0.0) -> "TimeGrid":
        return cls(t0, dt, int(round((t_end - t0) / dt)) + 1)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.n - 1)


@dataclass(frozen=True, eq=False)
class ResponseKernel:
    """Sampled u(t), du/dt and d2u/dt2 on a time grid."""

    grid: TimeGrid
    u: np.ndarray
    du: np.ndarray
    ddu: np.ndarray

    def __post_init__(self):
        for name in ("u", "du", "ddu"):
            if len(getattr(self, name)) != self.grid.n:
                raise ValueError(f"ResponseKernel: {name} length != grid.n")


class MemoryKernel:
    """A memory kernel gamma(t) with its first three antiderivatives.

    Subclasses with closed forms override :meth:`antiderivatives`.  The
    default tabulates gamma on a sub-grid and integrates by cumulative
    trapezoid, which is adequate when the kernel is smooth on the scale
    of the time step.
    """

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], substeps: int = 32):
        self.func = func
        self.substeps = substeps

    def __call__(self, t):
        return self.func(t)

    def antiderivatives(self, tau: np.ndarray):
        tau = np.asarray(tau, dtype=float)
        if tau.size < 2:
            z = np.zeros_like(tau)
            return z, z, z
        h = (tau[1] - tau[0]) / self.substeps
        fine = np.arange((tau.size - 1) * self.substeps + 1) * h
        g = np.asarray(self.func(fine), dtype=float) * np.ones_like(fine)
        out = []
        for _ in range(3):
            g = np.concatenate([[0.0], np.cumsum(0.5 * h * (g[1:] + g[:-1]))])
            out.append(g[:: self.substeps].copy())
        return tuple(out)


class LorentzianKernel(MemoryKernel):
    """gamma(t) = weight * rate / (1 + rate^2 t^2), with exact antiderivatives."""

    def __init__(self, weight: float, rate: float):
        self.weight = float(weight)
        self.rate = float(rate)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.weight * self.rate / (1.0 + (self.rate * t) ** 2)

    def antiderivatives(self, tau):
        tau = np.asarray(tau, dtype=float)
        r = self.rate
        at = np.arctan(r * tau)
        lg = np.log1p((r * tau) ** 2)
        k1 = at
        k2 = tau * at - lg / (2 * r)
        k3 = (0.5 * tau**2 - 0.5 / r**2) * at + tau / (2 * r) - tau * lg / (2 * r)
        c = self.weight
        return c * k1, c * k2, c * k3


def _as_kernel(gamma) -> MemoryKernel | None:
    if gamma is None:
        return None
    if isinstance(gamma, MemoryKernel):
        return gamma
    return MemoryKernel(gamma)


def _cell_moments(F1: np.ndarray, F2: np.ndarray, h: float):
    """Per-cell integrals of a kernel against the two hat-function halves.

    F1, F2 are the first and second antiderivatives sampled at k*h.
    Returns (A_k, B_k) with A_k = int_cell K and
    B_k = int_cell K(tau) (tau - k h)/h.
    """
    A = np.diff(F1)
    B = (h * F1[1:] - np.diff(F2)) / h
    return A, B


def _product_weights(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Lag weights c_j so that int_0^{t_n} K(t_n - s) v(s) ds ~
    sum_{j<n} c_j v_{n-j} + B_{n-1} v_0 for piecewise-linear v."""
    c = A - B
    c[1:] += B[:-1]
    return c


def _truncated(K1, K2, K3, tau, w: int):
    """Antiderivatives of gamma(tau) * [tau < tau_w], tau_w = tau[w]."""
    if w >= tau.size:
        return K1, K2, K3
    d = np.maximum(tau - tau[w], 0.0)
    a1, a2, a3 = K1[w], K2[w], K3[w]
    late = tau > tau[w]
    K1 = np.where(late, a1, K1)
    K2 = np.where(late, a2 + a1 * d, K2)
    K3 = np.where(late, a3 + a2 * d + 0.5 * a1 * d * d, K3)
    return K1, K2, K3


def _solve_once(kernel: MemoryKernel | None, omega_bar_sq: float, M: float,
                dt: float, n: int, window: int | None):
    tau = dt * np.arange(n)
    kk = np.arange(n - 1, dtype=float)
    # v(t) = 1 - int_0^t Q(t-s) v(s) ds with Q(tau) = wb^2 tau + (2/M) K1(tau)
    A = omega_bar_sq * dt**2 * (2 * kk + 1) / 2
    B = omega_bar_sq * dt**2 * (kk / 2 + 1.0 / 3.0)
    if kernel is not None:
        K1, K2, K3 = kernel.antiderivatives(tau)
        if window is not None:
            K1, K2, K3 = _truncated(K1, K2, K3, tau, window)
        Ak, Bk = _cell_moments(K2, K3, dt)
        A = A + (2.0 / M) * Ak
        B = B + (2.0 / M) * Bk
    c = _product_weights(A, B)

    v = np.empty(n)
    v[0] = 1.0
    # v stored reversed so the history slice is contiguous
    vr = np.empty(n)
    vr[n - 1] = 1.0
    diag = 1.0 + c[0]
    for i in range(1, n):
        hist = np.dot(c[1:i], vr[n - i:n - 1]) + B[i - 1]
        v[i] = (1.0 - hist) / diag
        vr[n - 1 - i] = v[i]

    u = np.concatenate([[0.0], np.cumsum(0.5 * dt * (v[1:] + v[:-1]))])
    mem = np.zeros(n)
    if kernel is not None:
        Ag, Bg = _cell_moments(K1, K2, dt)
        cg = _product_weights(Ag, Bg)
        # sum_{j=0}^{i-1} cg_j v_{i-j} + Bg_{i-1} v_0
        conv = np.convolve(cg, v[1:])[: n - 1]
        mem[1:] = conv + Bg * v[0]
    ddu = -omega_bar_sq * u - (2.0 / M) * mem
    return u, v, ddu


def solve_volterra(gamma, omega_bar_sq: float, M: float, grid: TimeGrid, *,
                   check_tol: float | None = None,
                   window: int | None = None) -> ResponseKernel:
    """Solve u'' + wb^2 u + (2/M) int_0^t gamma(t-s) u'(s) ds = 0.

    Initial conditions u(0) = 0, u'(0) = 1.  The equation is integrated
    once, v = u' then obeys a second-kind Volterra equation whose kernel
    ``wb^2 tau + (2/M) int_0^tau gamma`` is product-integrated exactly
    against piecewise-linear v (trapezoidal product integration).  A
    kernel narrower than ``grid.dt`` is therefore handled without
    resolving it, provided its antiderivatives are exact.

    Args:
        gamma: a :class:`MemoryKernel`, a plain callable, or None for no memory.
        omega_bar_sq: squared regularized frequency.
        M: oscillator mass.
        grid: output grid; only ``grid.dt`` and ``grid.n`` matter (t0 is
            taken as the origin of u).
        check_tol: if set, re-solve at dt/2 and raise :class:`AccuracyError`
            when the two solutions differ by more than this.
        window: optional memory truncation, in steps.

    Returns:
        ResponseKernel with u, u' and u''.
    """
    if not M > 0:
        raise ValueError("mass must be positive")
    kernel = _as_kernel(gamma)
    u, v, ddu = _solve_once(kernel, omega_bar_sq, M, grid.dt, grid.n, window)
    if check_tol is not None:
        fine_window = None if window is None else 2 * window
        uf, _, _ = _solve_once(kernel, omega_bar_sq, M, grid.dt / 2, 2 * grid.n - 1,
                               fine_window)
        gap = float(np.max(np.abs(uf[::2] - u)))
        if gap > check_tol:
            raise AccuracyError(
                f"step-halving disagreement {gap:.3e} exceeds {check_tol:.3e}; reduce dt",
                gap)
    return ResponseKernel(grid, u, v, ddu)
