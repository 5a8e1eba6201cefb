import math

import mpmath as mp
import numpy as np
import pytest

from fieldprobe.field import SmearingProfile, Wavepacket
from fieldprobe.numerics import DomainError
from fieldprobe.udw import (VALIDITY_BOUND, DetectorSpectrum, ExcitationResult, excitation, p0,
                            p1, p1_adiabatic, p1_newton_wigner, p1_terms)


def odd_packet(kbar, sigma):
    """Pure l = 1 content: (k_z / k) times a radial shell."""
    def amp(kv):
        k = np.linalg.norm(kv, axis=-1)
        return kv[..., 2] / np.maximum(k, 1e-300) * np.exp(-((k - kbar) ** 2) / (4 * sigma**2))

    return Wavepacket.custom(amp, (0.0, 0.0, kbar), sigma)


# -- spectrum ------------------------------------------------------------------------

def test_spectrum_validation():
    with pytest.raises(DomainError):
        DetectorSpectrum(())
    with pytest.raises(DomainError):
        DetectorSpectrum(((0.0, 1.0),))
    with pytest.raises(DomainError):
        DetectorSpectrum(((2.0, 1.0), (1.0, 1.0)))
    s = DetectorSpectrum(((1.0, 1.0), (2.5, 0.5j)))
    assert s.epsilon1 == 1.0
    assert s.truncated(1).levels == ((1.0, 1 + 0j),)


def test_validity_flag():
    assert ExcitationResult(0.05, 0.04, {}).perturbative
    assert not ExcitationResult(0.05, 0.06, {}).perturbative
    assert VALIDITY_BOUND == 0.1


# -- P0 ------------------------------------------------------------------------------

def test_p0_zero_matrix_elements():
    assert p0(SmearingProfile(1.0, 0.5, 2.0), DetectorSpectrum.single(1.0, 0.0)) == 0.0


def test_p0_suppressed_by_long_window():
    short = p0(SmearingProfile(1.0, 0.3, 2.0), DetectorSpectrum.single(1.0))
    long = p0(SmearingProfile(1.0, 0.3, 20.0), DetectorSpectrum.single(1.0))
    assert long * 10 <= short


def test_p0_golden():
    F = SmearingProfile(1.0, 0.1, 5.0)
    with mp.workdps(30):
        # int dk_bar |F~(1 + k, k)|^2 / (2k), radial form
        rad = mp.quad(lambda k: k / 2 * mp.exp(-(k * F.s_X) ** 2 - ((1 + k) * F.s_T) ** 2),
                      [0, 0.05, 0.2, mp.inf])
        ref = 4 * mp.pi / (2 * mp.pi) ** 1.5 * (1 / (4 * mp.pi**2)) ** 2 * rad
    assert p0(F, DetectorSpectrum.single(1.0)) == pytest.approx(float(ref), rel=1e-9)


def test_p0_massive_and_multilevel_additive():
    F = SmearingProfile(1.0, 0.4, 1.0)
    a = p0(F, DetectorSpectrum.single(1.0, 0.5), m=0.7)
    b = p0(F, DetectorSpectrum.single(2.0, 1.0), m=0.7)
    both = p0(F, DetectorSpectrum(((1.0, 0.5), (2.0, 1.0))), m=0.7)
    assert both == pytest.approx(a + b, rel=1e-14)


def test_p0_independent_of_state():
    F = SmearingProfile(1.0, 0.3, 3.0, t_center=10.0)
    spec = DetectorSpectrum.single(2.0)
    r1 = excitation(F, Wavepacket.toward_origin(2.0, 0.2, 10.0), spec)
    r2 = excitation(F, Wavepacket.gaussian((1.0, 1.0, 0.0), 0.5), spec)
    assert r1.p0 == r2.p0


def test_excitation_mass_mismatch():
    with pytest.raises(DomainError):
        excitation(SmearingProfile(1, 1, 1), Wavepacket.gaussian((0, 0, 1), 0.2, m=1.0),
                   DetectorSpectrum.single(2.0), m=0.0)


# -- P1 ------------------------------------------------------------------------------

def test_p1_l1_packet_vanishes():
    F = SmearingProfile(1.0, 0.5, 3.0)
    assert p1(F, odd_packet(2.0, 0.2), DetectorSpectrum.single(2.0)) <= 1e-10


def test_p1_requires_window_overlap():
    psi = Wavepacket.toward_origin(3.0, 0.5, 20.0)
    spec = DetectorSpectrum.single(3.0)
    on = p1(SmearingProfile(1.0, 0.1, 2.0, t_center=20.0), psi, spec)
    off = p1(SmearingProfile(1.0, 0.1, 2.0, t_center=100.0), psi, spec)
    assert on > 0 and off <= 1e-3 * on


def test_p1_counter_rotating_negligible_for_long_window():
    F = SmearingProfile(1.0, 0.1, 10.0, t_center=20.0)
    psi = Wavepacket.toward_origin(3.0, 0.1, 20.0)
    (co, counter), = p1_terms(F, psi, DetectorSpectrum.single(3.0))
    assert counter <= 0.01 * co


def test_p1_quadratic_in_mu():
    F = SmearingProfile(1.0, 0.5, 2.0, t_center=5.0)
    psi = Wavepacket.toward_origin(1.5, 0.3, 5.0)
    base = p1(F, psi, DetectorSpectrum.single(1.5, 1.0))
    assert p1(F, psi, DetectorSpectrum.single(1.5, 0.3 - 0.4j)) == pytest.approx(0.25 * base, rel=1e-12)


def test_p1_global_phase_invariant():
    F = SmearingProfile(1.0, 0.5, 2.0, t_center=5.0)
    psi = Wavepacket.toward_origin(1.5, 0.3, 5.0)
    rot = Wavepacket.custom(lambda kv: np.exp(0.7j) * psi(kv), psi.k0, psi.sigma_k, psi.L,
                            normalize=False)
    spec = DetectorSpectrum.single(1.5)
    assert p1(F, rot, spec) == pytest.approx(p1(F, psi, spec), rel=1e-12)


def test_window_slide_tracks_arrival():
    psi = Wavepacket.toward_origin(3.0, 0.5, 20.0)
    spec = DetectorSpectrum.single(3.0)
    F = SmearingProfile(1.0, 0.1, 2.0)
    centres = np.linspace(10, 30, 41)
    vals = [p1(F.shifted(c), psi, spec) for c in centres]
    assert abs(centres[int(np.argmax(vals))] - 20.0) <= F.s_T


# -- Newton-Wigner representation ----------------------------------------------------------

def test_newton_wigner_path_agrees():
    F = SmearingProfile(1.0, 1.0, 2.0, t_center=10.0)
    psi = Wavepacket.toward_origin(1.0, 0.15, 10.0)
    spec = DetectorSpectrum.single(1.0)
    a = p1(F, psi, spec)
    b = p1_newton_wigner(F, psi, spec, n_k=40)
    assert b == pytest.approx(a, rel=1e-3)


def test_newton_wigner_no_overlap():
    psi = Wavepacket.toward_origin(1.0, 0.15, 10.0)
    spec = DetectorSpectrum.single(1.0)
    on = p1_newton_wigner(SmearingProfile(1.0, 1.0, 2.0, t_center=10.0), psi, spec, n_k=32)
    off = p1_newton_wigner(SmearingProfile(1.0, 1.0, 2.0, t_center=-60.0), psi, spec, n_k=32)
    # the momentum path puts this at ~1e-22; the spacetime grid floors near 1e-6 of `on`
    assert off <= 1e-5 * on


# -- adiabatic limit ---------------------------------------------------------------------

def test_adiabatic_zero_projection():
    spec = DetectorSpectrum(((1.0, 1.0), (2.0, 0.5)))
    assert p1_adiabatic(lambda k: 1.0, lambda k: 0.0, spec) == 0.0


def test_adiabatic_quadratic_in_projection():
    spec = DetectorSpectrum.single(1.3)
    g = SmearingProfile(1.0, 0.2, 1.0)
    a = p1_adiabatic(g, lambda k: 0.4, spec)
    assert p1_adiabatic(g, lambda k: 0.8, spec) == pytest.approx(4 * a, rel=1e-14)


def test_adiabatic_printed_formula():
    spec = DetectorSpectrum.single(2.0, 0.5)
    val = p1_adiabatic(lambda k: 0.3, lambda k: 0.7, spec, m=1.0)
    k2 = 3.0
    assert val == pytest.approx(2.0 * 0.25 * 0.09 * 0.49 / (8 * math.pi**2 * k2), rel=1e-14)


def test_adiabatic_below_mass_rejected():
    with pytest.raises(DomainError, match="on-shell"):
        p1_adiabatic(lambda k: 1.0, lambda k: 1.0, DetectorSpectrum.single(0.5), m=1.0)
    with pytest.raises(ValueError):
        p1_adiabatic(lambda k: 1.0, lambda k: 1.0, DetectorSpectrum.single(2.0), form="other")


def test_adiabatic_scan_mirrors_projection():
    kbar, sigma = 5.0, 0.02
    psi = Wavepacket.gaussian((0.0, 0.0, kbar), sigma)
    g = SmearingProfile(1.0, 0.01, 1.0)
    eps = np.linspace(kbar - 3 * sigma, kbar + 3 * sigma, 61)
    resp = np.array([p1_adiabatic(g, psi, DetectorSpectrum.single(e)) for e in eps])
    prof = np.abs(psi.l0(eps)) ** 2
    assert abs(eps[np.argmax(resp)] - kbar) <= 0.1 * sigma
    assert np.max(np.abs(resp / resp.max() - prof / prof.max())) <= 0.01


def test_adiabatic_derived_is_long_window_limit():
    # F with temporal amplitude fixed while s_T grows: F~ -> 2 pi delta(w) g(k)
    psi = Wavepacket.gaussian((0, 0, 2.0), 0.3)
    spec = DetectorSpectrum.single(2.0)
    limit = p1_adiabatic(SmearingProfile(1.0, 0.3, 1.0), psi, spec, form="derived")
    errs = []
    for sT in (20.0, 40.0):
        F = SmearingProfile(math.sqrt(2 * math.pi) * sT, 0.3, sT)
        errs.append(abs(p1(F, psi, spec) / limit - 1))
    assert errs[1] < 5e-3
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)
