"""Tests for equilibrium statistics, scaling fits, and the fidelity scan."""

import dataclasses

import numpy as np
import pytest

from thermalab.analysis import (
    DeviationPoint,
    area_law_extract,
    entropy_deviation_fit,
    equilibrium_stats,
    eth_deviation_fit,
    fit_relaxation_time,
    fluctuation_scaling,
    heisenberg_scan,
    powerlaw_probe,
    smoothed_deviation,
)
from thermalab.basis import SectorVector, build_sector_basis
from thermalab.bloch import build_bloch_state
from thermalab.errors import DomainError, ResourceError, UsageError
from thermalab.model import BENCHMARK_PARAMS, SectorSpec
from thermalab.operators import sector_hamiltonian


def symmetric_basis(L):
    return build_sector_basis(SectorSpec(L=L, k=0, reflection=1))


# ---------------------------------------------------------------------------
# equilibrium statistics


def test_constant_series_has_zero_fluctuation():
    t = np.linspace(0.0, 100.0, 1001)
    stats = equilibrium_stats(t, np.full_like(t, 0.73))
    assert stats.o_bar == pytest.approx(0.73, abs=1e-14)
    assert stats.delta_o2 == pytest.approx(0.0, abs=1e-16)
    assert stats.t_lo == pytest.approx(75.0)
    assert stats.t_hi == pytest.approx(100.0)


def test_sinusoid_matches_analytic_moments():
    omega = 7.3
    t = np.linspace(0.0, 100.0, 20001)
    stats = equilibrium_stats(t, np.sin(omega * t))
    t_m = 25.0
    assert abs(stats.o_bar) < 1.0 / (omega * t_m)
    assert stats.delta_o2 == pytest.approx(0.5, abs=1.0 / (omega * t_m))


def test_mean_is_linear_in_the_series():
    rng = np.random.default_rng(11)
    t = np.linspace(0.0, 60.0, 601)
    a = rng.normal(size=t.size)
    b = rng.normal(size=t.size)
    lhs = equilibrium_stats(t, 2.0 * a - 0.5 * b).o_bar
    rhs = 2.0 * equilibrium_stats(t, a).o_bar - 0.5 * equilibrium_stats(t, b).o_bar
    assert lhs == pytest.approx(rhs, abs=1e-13)


def test_trailing_window_ignores_early_transient():
    t = np.linspace(0.0, 100.0, 2001)
    v = np.where(t < 50.0, 40.0, 1.25)
    stats = equilibrium_stats(t, v)
    assert stats.o_bar == pytest.approx(1.25, abs=1e-12)


def test_short_series_rejected():
    t = np.linspace(0.0, 1.0, 8)
    with pytest.raises(UsageError):
        equilibrium_stats(t, np.ones_like(t))


# ---------------------------------------------------------------------------
# scaling fits


def test_eth_fit_recovers_synthetic_slope():
    x = np.array([-0.4, -0.1, 0.2, 0.5, 0.9])
    points = [DeviationPoint(x=xi, y=0.5 * 7.0 * xi) for xi in x]
    fit = eth_deviation_fit(points)
    assert fit.slope == pytest.approx(7.0, abs=1e-12)
    assert fit.residual_rms == pytest.approx(0.0, abs=1e-12)


def test_eth_fit_rejects_degenerate_spread():
    points = [DeviationPoint(x=0.0, y=0.1) for _ in range(4)]
    with pytest.raises(DomainError):
        eth_deviation_fit(points)
    with pytest.raises(UsageError):
        eth_deviation_fit(points[:2])


def test_fluctuation_fit_recovers_unit_decay():
    s = np.array([6.0, 8.0, 10.0, 12.0])
    fit = fluctuation_scaling(s, 2.0 ** (-s))
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert fit.prefactor == pytest.approx(1.0, rel=1e-10)


def test_fluctuation_fit_validates_input():
    with pytest.raises(DomainError):
        fluctuation_scaling(np.array([6.0, 8.0, 10.0]), np.array([1e-3, -1e-4, 1e-5]))
    with pytest.raises(UsageError):
        fluctuation_scaling(np.array([6.0, 8.0]), np.array([1e-3, 1e-4]))


def test_quadratic_fit_exact_on_parabola():
    x = np.linspace(-0.3, 0.4, 9)
    fit = entropy_deviation_fit(x, 1.7 * x**2 - 0.2 * x + 0.05)
    assert fit.a == pytest.approx(1.7, abs=1e-10)
    assert fit.b == pytest.approx(-0.2, abs=1e-10)
    assert fit.c == pytest.approx(0.05, abs=1e-12)


def test_area_law_subtracts_volume_term():
    s_bar = {1: 0.9 + 0.02, 2: 1.8 + 0.021, 3: 2.7 + 0.019}
    result = area_law_extract(s_bar, 0.9)
    assert result.g == pytest.approx(0.02, abs=1e-3)
    assert result.per_l[2] == pytest.approx(0.021, abs=1e-12)
    assert result.spread == pytest.approx(0.002, abs=1e-12)


# ---------------------------------------------------------------------------
# relaxation fits


def make_decay(tau=5.0, amp=1.0, noise=1e-8, t_f=100.0, dt=0.1, seed=3):
    rng = np.random.default_rng(seed)
    t = np.arange(0.0, t_f + dt / 2, dt)
    values = amp * np.exp(-t / tau) + noise * rng.normal(size=t.size)
    return t, values


def test_synthetic_exponential_tau_recovered():
    t, v = make_decay(tau=5.0, noise=1e-8)
    stats = equilibrium_stats(t, v)
    fit = fit_relaxation_time(t, v, stats, window=(5.0, 40.0))
    assert fit.accepted
    assert fit.tau == pytest.approx(5.0, rel=0.02)
    assert fit.r_squared > 0.99
    assert fit.tau_ci_lo < fit.tau < fit.tau_ci_hi


def test_tau_recovered_at_snr_100():
    t, v = make_decay(tau=5.0, amp=1.0, noise=0.01, seed=17)
    stats = equilibrium_stats(t, v)
    fit = fit_relaxation_time(t, v, stats, window=(0.0, 40.0))
    assert fit.accepted
    assert fit.tau == pytest.approx(5.0, rel=0.02)
    assert fit.n_excluded > 0  # tail samples below the noise floor dropped


def test_default_window_stops_at_noise_floor():
    t, v = make_decay(tau=5.0, amp=1.0, noise=0.01, t_f=60.0, seed=23)
    stats = equilibrium_stats(t, v)
    fit = fit_relaxation_time(t, v, stats)
    assert fit.accepted
    assert fit.t_lo == pytest.approx(9.0)
    # decay hits 3*sigma around t = -tau * ln(0.03) ~ 17.5, well before 0.75*t_f
    assert fit.t_hi < 25.0
    # the auto window spans barely 1.7*tau at low SNR; only rough recovery here
    assert fit.tau == pytest.approx(5.0, rel=0.2)


def test_smoothing_preserves_decay_constant():
    t, v = make_decay(tau=4.0, noise=0.0)
    tc, sm = smoothed_deviation(t, v, 0.0, 3.0)
    # centered mean of an exponential is the same exponential times a constant
    assert tc[0] == pytest.approx(1.5) and tc[-1] == pytest.approx(98.5)
    slope = np.polyfit(tc[tc < 40], np.log(sm[tc < 40]), 1)[0]
    assert -1.0 / slope == pytest.approx(4.0, rel=1e-6)


def test_smoothing_rescues_oscillatory_fit():
    rng = np.random.default_rng(11)
    t = np.arange(0.0, 100.0, 0.1)
    v = np.exp(-t / 5.0) * (1.0 + 0.9 * np.sin(4.0 * t)) + 1e-3 * rng.normal(size=t.size)
    stats = equilibrium_stats(t, v)
    raw = fit_relaxation_time(t, v, stats, window=(2.0, 30.0))
    assert not raw.accepted  # dips between oscillation peaks wreck R^2
    tc, sm = smoothed_deviation(t, v, stats.o_bar, 3.0)
    flat = dataclasses.replace(stats, o_bar=0.0)
    fit = fit_relaxation_time(tc, sm, flat, window=(2.0, 30.0))
    assert fit.accepted
    assert fit.tau == pytest.approx(5.0, rel=0.05)


def test_smoothing_rejects_bad_width():
    t, v = make_decay()
    with pytest.raises(UsageError):
        smoothed_deviation(t, v, 0.0, 0.0)
    with pytest.raises(UsageError):
        smoothed_deviation(t, v, 0.0, 1e6)


def test_pure_noise_fit_is_rejected_not_raised():
    rng = np.random.default_rng(5)
    t = np.arange(0.0, 100.0, 0.1)
    v = 0.3 + 1e-3 * rng.normal(size=t.size)
    stats = equilibrium_stats(t, v)
    fit = fit_relaxation_time(t, v, stats, window=(10.0, 70.0))
    assert not fit.accepted
    assert fit.reason != ""


def test_growing_series_rejected():
    t = np.arange(0.0, 100.0, 0.1)
    flat = equilibrium_stats(t, np.zeros_like(t))
    fit = fit_relaxation_time(t, 1e-4 * np.exp(t / 50.0), flat, window=(10.0, 70.0))
    assert not fit.accepted


def test_relaxation_fit_deterministic():
    t, v = make_decay(noise=0.01, seed=31)
    stats = equilibrium_stats(t, v)
    a = fit_relaxation_time(t, v, stats, window=(5.0, 40.0))
    b = fit_relaxation_time(t, v, stats, window=(5.0, 40.0))
    assert a == b


def test_powerlaw_probe_recovers_exponent():
    t = np.arange(0.1, 100.0, 0.1)
    stats_like = equilibrium_stats(np.linspace(0, 100, 100), np.zeros(100))
    probe = powerlaw_probe(t, t**-0.5, stats_like, window=(1.0, 80.0))
    assert probe.slope == pytest.approx(-0.5, rel=0.02)
    assert abs(probe.curvature) < 1e-10


def test_powerlaw_probe_flags_exponential_curvature():
    t = np.arange(0.1, 100.0, 0.1)
    stats_like = equilibrium_stats(np.linspace(0, 100, 100), np.zeros(100))
    probe = powerlaw_probe(t, np.exp(-t / 5.0), stats_like, window=(1.0, 80.0))
    # an exponential in log-log has strong negative curvature, unlike a power law
    assert probe.curvature < -0.1


# ---------------------------------------------------------------------------
# Heisenberg fidelity scan


def test_eigenstate_plateau_is_unity():
    basis = symmetric_basis(8)
    H = sector_hamiltonian(basis, BENCHMARK_PARAMS).toarray()
    _, vectors = np.linalg.eigh(H)
    initial = SectorVector(basis, vectors[:, 3].astype(complex))
    scan = heisenberg_scan(initial, BENCHMARK_PARAMS, t_final=500.0, dt=0.5)
    assert scan.ipr == pytest.approx(1.0, abs=1e-12)
    assert scan.plateau == pytest.approx(1.0, abs=1e-10)
    assert np.all(np.abs(scan.fidelity - 1.0) < 1e-10)


def test_y_plus_plateau_matches_participation_sum():
    basis = symmetric_basis(8)
    initial = build_bloch_state(basis, np.pi / 2, np.pi / 2)
    scan = heisenberg_scan(initial, BENCHMARK_PARAMS, t_final=1e5, dt=0.5)
    assert scan.plateau == pytest.approx(scan.ipr, rel=0.10)
    # the smoothed series settles onto the same plateau
    centers, means = scan.averaged[1000]
    late = means[centers > 0.5 * centers[-1]]
    assert np.all(np.abs(late - scan.ipr) < 0.15 * scan.ipr)


def test_plateau_onset_grows_with_system_size():
    onsets = []
    for L in (6, 8, 10):
        basis = symmetric_basis(L)
        initial = build_bloch_state(basis, np.pi / 2, np.pi / 2)
        scan = heisenberg_scan(initial, BENCHMARK_PARAMS, t_final=2e4, dt=0.5)
        centers, means = scan.averaged[100]
        settled = np.abs(means - scan.ipr) <= 0.15 * scan.ipr
        # first block after which every later block stays settled
        stay = np.logical_and.accumulate(settled[::-1])[::-1]
        onsets.append(centers[np.argmax(stay)] if stay.any() else np.inf)
    assert onsets[0] <= onsets[1] <= onsets[2]
    assert np.isfinite(onsets[-1])


def test_heisenberg_resource_guard():
    basis = symmetric_basis(14)
    initial = build_bloch_state(basis, np.pi / 2, np.pi / 2)
    with pytest.raises(ResourceError):
        heisenberg_scan(initial, BENCHMARK_PARAMS, t_final=100.0)
