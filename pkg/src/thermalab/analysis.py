"""Post-processing of trajectories: equilibrium statistics and fits.

Everything in this module is a pure function of plain numpy arrays so the
routines can be applied equally to freshly computed trajectories, to series
reloaded from CSV, and to synthetic test signals.  Time averages follow the
trailing-window convention: the mean is taken over the last quarter of the
simulated window (trapezoidal in t, so uneven sampling is handled), and the
temporal fluctuation is the variance over the same window.

Relaxation-time fits operate on log|O(t) - O_bar|.  The fit window is
explicit configuration: it defaults to [0.15 t_f, first crossing of the
noise floor], where the noise floor is 3 sqrt(delta_O2) estimated from the
trailing window.  Fits with tau <= 0 or R^2 below threshold are returned as
rejected records rather than raised, so batch analyses can tabulate them.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .basis import SectorVector
from .errors import DomainError, ResourceError, UsageError
from .model import HamiltonianParams
from .operators import sector_hamiltonian

__all__ = [
    "EquilibriumStats",
    "DeviationPoint",
    "EthFit",
    "FluctuationFit",
    "QuadraticFit",
    "AreaLawResult",
    "RelaxationFit",
    "PowerLawProbe",
    "HeisenbergScan",
    "equilibrium_stats",
    "eth_deviation_fit",
    "fluctuation_scaling",
    "entropy_deviation_fit",
    "area_law_extract",
    "fit_relaxation_time",
    "powerlaw_probe",
    "heisenberg_scan",
]

# Trailing fraction of the time window used for equilibrium averages.
EQUILIBRIUM_FRACTION = 0.25

# Default relaxation-fit window, as fractions of t_final.
FIT_WINDOW_START = 0.15
FIT_WINDOW_STOP = 0.75

# Points closer to O_bar than this multiple of sqrt(delta_O2) are excluded
# from relaxation fits: below that level the decay is buried in fluctuations.
NOISE_FLOOR_FACTOR = 3.0

R2_THRESHOLD = 0.8

HEISENBERG_MAX_L = 12


# ---------------------------------------------------------------------------
# equilibrium statistics


@dataclass(frozen=True)
class EquilibriumStats:
    """Trailing-window time average and temporal fluctuation of a series."""

    o_bar: float
    delta_o2: float
    t_lo: float
    t_hi: float
    n_samples: int


def _window_slice(times: np.ndarray, t_lo: float, t_hi: float) -> slice:
    lo = int(np.searchsorted(times, t_lo - 1e-12))
    hi = int(np.searchsorted(times, t_hi + 1e-12))
    return slice(lo, hi)


def equilibrium_stats(
    times: np.ndarray, values: np.ndarray, fraction: float = EQUILIBRIUM_FRACTION
) -> EquilibriumStats:
    """Time average O_bar and fluctuation delta_O2 over the trailing window.

    The window is the last `fraction` of the simulated span; both moments are
    trapezoidal integrals in t divided by the window length, following the
    late-time-average estimate of the diagonal ensemble.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.ndim != 1 or times.shape != values.shape:
        raise UsageError("times and values must be 1-d arrays of equal length")
    if not 0 < fraction <= 1:
        raise UsageError(f"fraction must lie in (0, 1], got {fraction}")
    if times.size < int(np.ceil(4 / fraction)):
        raise UsageError(
            f"series too short for a fraction-{fraction} trailing window: "
            f"{times.size} samples"
        )
    span = times[-1] - times[0]
    t_lo = times[-1] - fraction * span
    sel = _window_slice(times, t_lo, times[-1])
    t = times[sel]
    v = values[sel]
    if t.size < 2:
        raise UsageError("trailing window contains fewer than two samples")
    length = t[-1] - t[0]
    o_bar = float(np.trapezoid(v, t) / length)
    # integrate (v - o_bar)^2 rather than v^2 - o_bar^2: identical in exact
    # arithmetic, but immune to cancellation when fluctuations are tiny
    delta = float(np.trapezoid((v - o_bar) ** 2, t) / length)
    return EquilibriumStats(
        o_bar=o_bar,
        delta_o2=max(delta, 0.0),
        t_lo=float(t[0]),
        t_hi=float(t[-1]),
        n_samples=int(t.size),
    )


def smoothed_deviation(
    times: np.ndarray, values: np.ndarray, o_bar: float, width: float
) -> tuple[np.ndarray, np.ndarray]:
    """Centered running mean of |O(t) - o_bar| over `width` time units.

    Small chains superimpose strong coherent oscillations on the relaxation
    envelope; averaging them out before a log-linear fit leaves the decay
    constant untouched, since the centered mean of A e^(-t/tau) is again
    proportional to e^(-t/tau) (the sinh factor is absorbed by the
    prefactor).  Returns the trimmed time axis and the smoothed series.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.ndim != 1 or times.shape != values.shape:
        raise UsageError("times and values must be 1-d arrays of equal length")
    if width <= 0:
        raise UsageError(f"smoothing width must be positive, got {width}")
    dt = float(np.median(np.diff(times)))
    n = max(1, int(round(width / dt)))
    if n % 2 == 0:
        n += 1
    if n >= times.size:
        raise UsageError(
            f"smoothing width {width} spans the whole series ({times.size} samples)"
        )
    dev = np.abs(values - o_bar)
    kernel = np.full(n, 1.0 / n)
    smoothed = np.convolve(dev, kernel, mode="valid")
    half = (n - 1) // 2
    return times[half : times.size - half], smoothed


# ---------------------------------------------------------------------------
# ETH deviation scaling


@dataclass(frozen=True)
class DeviationPoint:
    """One (state, L) sample of the equilibrium-vs-thermal deviation.

    x is the variance mismatch (v - v_tilde)/L, y the deviation
    O_bar - O_tilde of the trailing-window average from the matched thermal
    expectation.
    """

    x: float
    y: float
    state: str = ""
    L: int = 0
    observable: str = ""


@dataclass(frozen=True)
class EthFit:
    """Origin-anchored fit y = (x/2) * slope; slope estimates d2O/deps2."""

    slope: float
    residual_rms: float
    n_points: int


def eth_deviation_fit(points: list[DeviationPoint]) -> EthFit:
    """Least-squares slope of the deviation model y = (x/2) d2O.

    The model line passes through the origin by construction, so the single
    parameter is the curvature prefactor of the thermal expectation.
    """
    if len(points) < 3:
        raise UsageError(f"need at least 3 deviation points, got {len(points)}")
    x = np.array([p.x for p in points], dtype=float)
    y = np.array([p.y for p in points], dtype=float)
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise DomainError("deviation points must be finite")
    denom = float(np.dot(x, x))
    if denom < 1e-30 or np.ptp(x) < 1e-12 * max(1.0, float(np.abs(x).max())):
        raise DomainError("degenerate x-spread in deviation fit")
    slope = 2.0 * float(np.dot(x, y)) / denom
    resid = y - 0.5 * slope * x
    return EthFit(
        slope=slope,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        n_points=len(points),
    )


@dataclass(frozen=True)
class FluctuationFit:
    """Linear fit of log2(delta_O2) against the extensive thermal entropy."""

    slope: float
    log2_prefactor: float
    residual_rms: float
    n_points: int

    @property
    def prefactor(self) -> float:
        return float(2.0**self.log2_prefactor)


def fluctuation_scaling(
    entropies: np.ndarray, delta_o2: np.ndarray
) -> FluctuationFit:
    """Fit log2 delta_O2 = slope * S_tilde + log2 M over system sizes.

    The fluctuation bound predicts slope -1 with a state-dependent
    prefactor M; entropies are the extensive thermal entropies (bits) at the
    state's energy density, one per system size.
    """
    s = np.asarray(entropies, dtype=float)
    d = np.asarray(delta_o2, dtype=float)
    if s.shape != d.shape or s.ndim != 1:
        raise UsageError("entropies and delta_o2 must be 1-d arrays of equal length")
    if s.size < 3:
        raise UsageError(f"need at least 3 sizes, got {s.size}")
    if np.any(d <= 0):
        raise DomainError("delta_O2 must be positive to take logarithms")
    if np.ptp(s) < 1e-9:
        raise DomainError("degenerate entropy spread in fluctuation fit")
    y = np.log2(d)
    slope, intercept = np.polyfit(s, y, 1)
    resid = y - (slope * s + intercept)
    return FluctuationFit(
        slope=float(slope),
        log2_prefactor=float(intercept),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        n_points=int(s.size),
    )


@dataclass(frozen=True)
class QuadraticFit:
    """y = a x^2 + b x + c; `a` is the reported coefficient."""

    a: float
    b: float
    c: float
    residual_rms: float
    n_points: int


def entropy_deviation_fit(x: np.ndarray, y: np.ndarray) -> QuadraticFit:
    """Quadratic fit of the entropy deviation against the variance mismatch.

    The quadratic coefficient is reported without a reference value: no
    interpretation of it is established, so b and c are nuisance terms.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise UsageError("x and y must be 1-d arrays of equal length")
    if x.size < 4:
        raise UsageError(f"need at least 4 points for a quadratic fit, got {x.size}")
    if np.ptp(x) < 1e-12:
        raise DomainError("degenerate x-spread in quadratic fit")
    a, b, c = np.polyfit(x, y, 2)
    resid = y - np.polyval([a, b, c], x)
    return QuadraticFit(
        a=float(a),
        b=float(b),
        c=float(c),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        n_points=int(x.size),
    )


# ---------------------------------------------------------------------------
# area law


@dataclass(frozen=True)
class AreaLawResult:
    """Cluster-size-independent excess of equilibrium entropy.

    per_l maps cluster size l to S_bar_l - l * (S_tilde / L_tilde); their mean
    is the area-law term G and `spread` is the max-min range across l.
    """

    g: float
    per_l: dict[int, float]
    spread: float


def area_law_extract(
    entropy_bar: dict[int, float], entropy_per_site: float
) -> AreaLawResult:
    """Extract the area-law excess G from equilibrium cluster entropies.

    entropy_bar maps l to the trailing-window average of S_l;
    entropy_per_site is the matched thermal entropy density S_tilde/L_tilde
    in bits.  The volume term l * entropy_per_site is subtracted per l.
    """
    if not entropy_bar:
        raise UsageError("entropy_bar must contain at least one cluster size")
    per_l = {
        int(l): float(s_bar - l * entropy_per_site)
        for l, s_bar in sorted(entropy_bar.items())
    }
    vals = np.array(list(per_l.values()))
    if not np.isfinite(vals).all():
        raise DomainError("entropy deviations must be finite")
    return AreaLawResult(
        g=float(vals.mean()),
        per_l=per_l,
        spread=float(np.ptp(vals)) if vals.size > 1 else 0.0,
    )


# ---------------------------------------------------------------------------
# relaxation-time fitting


@dataclass(frozen=True)
class RelaxationFit:
    """Exponential relaxation fit of log|O(t) - O_bar| over a time window.

    tau is -1/slope of the least-squares line.  `accepted` is False when the
    fit fails its quality gates (tau <= 0, low R^2, or too few points above
    the noise floor); `reason` then says which gate failed.
    """

    tau: float
    t_lo: float
    t_hi: float
    slope: float
    intercept: float
    residual_rms: float
    r_squared: float
    tau_ci_lo: float
    tau_ci_hi: float
    n_points: int
    n_excluded: int
    noise_floor: float
    accepted: bool
    reason: str = ""


def _default_fit_window(
    times: np.ndarray, deviations: np.ndarray, noise_floor: float
) -> tuple[float, float]:
    """Window [0.15 t_f, min(first noise-floor crossing, 0.75 t_f)]."""
    t_f = float(times[-1])
    t_lo = FIT_WINDOW_START * t_f
    t_hi = FIT_WINDOW_STOP * t_f
    after = times >= t_lo
    below = after & (deviations < noise_floor)
    if below.any():
        t_cross = float(times[np.argmax(below)])
        t_hi = min(t_hi, t_cross)
    return t_lo, t_hi


def fit_relaxation_time(
    times: np.ndarray,
    values: np.ndarray,
    stats: EquilibriumStats,
    window: tuple[float, float] | None = None,
    noise_floor: float | None = None,
    r2_threshold: float = R2_THRESHOLD,
    min_points: int = 10,
) -> RelaxationFit:
    """Fit tau from the late-time exponential approach to O_bar.

    The line is fit to (t, ln|O(t) - O_bar|) inside `window`, excluding
    points under the noise floor (default 3 sqrt(delta_O2), the scale at
    which fluctuations swamp the visible decay).  The least squares
    are weighted by dev^2 -- the inverse variance of ln|s + noise| -- which
    both stabilizes the fit and cancels the leading noise-induced bias of
    the log (the weighted per-point bias is constant, so the intercept
    absorbs it).  The returned confidence interval comes from the standard
    error of the weighted regression slope; no claim beyond ordinary
    linear-regression statistics is made for it.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape or times.ndim != 1:
        raise UsageError("times and values must be 1-d arrays of equal length")
    if noise_floor is None:
        scale = max(abs(stats.o_bar), 1.0)
        noise_floor = max(
            NOISE_FLOOR_FACTOR * float(np.sqrt(stats.delta_o2)),
            10.0 * np.finfo(float).eps * scale,
        )
    dev = np.abs(values - stats.o_bar)
    if window is None:
        window = _default_fit_window(times, dev, noise_floor)
    t_lo, t_hi = float(window[0]), float(window[1])
    if t_hi > stats.t_lo + 1e-9:
        t_hi = stats.t_lo

    def rejected(reason: str, n_pts: int = 0, n_exc: int = 0) -> RelaxationFit:
        return RelaxationFit(
            tau=np.nan, t_lo=t_lo, t_hi=t_hi, slope=np.nan, intercept=np.nan,
            residual_rms=np.nan, r_squared=np.nan, tau_ci_lo=np.nan,
            tau_ci_hi=np.nan, n_points=n_pts, n_excluded=n_exc,
            noise_floor=noise_floor, accepted=False, reason=reason,
        )

    if t_hi <= t_lo:
        return rejected("empty fit window")
    sel = _window_slice(times, t_lo, t_hi)
    t = times[sel]
    d = dev[sel]
    # points under the noise floor carry no decay information and would blow
    # up the log; drop them pointwise so oscillatory deviations keep their
    # peaks even when the dips between them cross the floor
    keep = d >= noise_floor
    n_excluded = int(np.count_nonzero(~keep))
    t, d = t[keep], d[keep]
    if t.size < min_points:
        return rejected(
            f"only {t.size} points above the noise floor (need {min_points})",
            n_pts=int(t.size), n_exc=n_excluded,
        )
    y = np.log(d)
    w = d**2
    w_sum = float(w.sum())
    t_mean = float(np.dot(w, t) / w_sum)
    y_mean = float(np.dot(w, y) / w_sum)
    s_tt = float(np.dot(w, (t - t_mean) ** 2))
    slope = float(np.dot(w, (t - t_mean) * (y - y_mean)) / s_tt)
    intercept = y_mean - slope * t_mean
    fitted = slope * t + intercept
    ss_res = float(np.dot(w, (y - fitted) ** 2))
    ss_tot = float(np.dot(w, (y - y_mean) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    # standard error of the slope, and the induced interval on tau = -1/slope
    dof = t.size - 2
    se_slope = np.sqrt(ss_res / dof / s_tt)
    lo_slope, hi_slope = slope - 1.96 * se_slope, slope + 1.96 * se_slope
    if hi_slope < 0:
        ci_lo, ci_hi = -1.0 / lo_slope, -1.0 / hi_slope
    else:
        ci_lo, ci_hi = -1.0 / lo_slope if lo_slope < 0 else np.nan, np.inf
    tau = -1.0 / slope if slope < 0 else np.nan
    fit = RelaxationFit(
        tau=float(tau), t_lo=t_lo, t_hi=t_hi, slope=float(slope),
        intercept=float(intercept),
        residual_rms=float(np.sqrt(ss_res / w_sum)), r_squared=float(r2),
        tau_ci_lo=float(ci_lo), tau_ci_hi=float(ci_hi),
        n_points=int(t.size), n_excluded=n_excluded,
        noise_floor=noise_floor, accepted=True,
    )
    if not slope < 0:
        return rejected("non-decaying series (slope >= 0)", fit.n_points, n_excluded)
    if r2 < r2_threshold:
        return dataclasses.replace(
            fit, accepted=False,
            reason=f"R^2 {r2:.3f} below threshold {r2_threshold}",
        )
    return fit


@dataclass(frozen=True)
class PowerLawProbe:
    """Log-log slope of the deviation inside a window (diagnostic only).

    curvature is the quadratic coefficient of a parabola in log t; a clean
    power law has curvature compatible with zero, while an exponential shows
    strong negative curvature over any decade-spanning window.
    """

    slope: float
    curvature: float
    n_points: int
    n_excluded: int


def powerlaw_probe(
    times: np.ndarray,
    values: np.ndarray,
    stats: EquilibriumStats,
    window: tuple[float, float],
) -> PowerLawProbe:
    """Slope of ln|O(t) - O_bar| against ln t inside the window."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    t_lo, t_hi = float(window[0]), float(window[1])
    if t_lo <= 0:
        raise UsageError("power-law window must start at t > 0")
    sel = _window_slice(times, t_lo, t_hi)
    t = times[sel]
    dev = np.abs(values[sel] - stats.o_bar)
    keep = dev > 0
    n_excluded = int(np.count_nonzero(~keep))
    t, dev = t[keep], dev[keep]
    if t.size < 4:
        raise UsageError("too few positive deviations in the power-law window")
    x = np.log(t)
    y = np.log(dev)
    slope, _ = np.polyfit(x, y, 1)
    curv, _, _ = np.polyfit(x, y, 2)
    return PowerLawProbe(
        slope=float(slope),
        curvature=float(curv),
        n_points=int(t.size),
        n_excluded=n_excluded,
    )


# ---------------------------------------------------------------------------
# Heisenberg-time fidelity scan


@dataclass(frozen=True)
class HeisenbergScan:
    """Block-averaged fidelity over an exponentially long horizon.

    `averaged` maps each smoothing window length to (block centers, block
    means).  `ipr` is the participation sum over eigenstates; the fidelity
    plateaus at this value once all eigenphase pairs have dephased.
    """

    times: np.ndarray
    fidelity: np.ndarray
    averaged: dict[int, tuple[np.ndarray, np.ndarray]]
    plateau: float
    ipr: float
    weights: np.ndarray = field(repr=False)


def heisenberg_scan(
    initial: SectorVector,
    params: HamiltonianParams,
    t_final: float = 1e5,
    dt: float = 0.5,
    windows: tuple[int, ...] = (100, 1000),
) -> HeisenbergScan:
    """Fidelity |<psi(0)|psi(t)>|^2 from the dense sector decomposition.

    The long horizon makes step-wise propagation pointless: the sector is
    small enough (guarded) to diagonalize, and the fidelity is evaluated in
    closed form F(t) = |sum_j w_j exp(-i E_j t)|^2 with w_j = |c_j|^2.  Block
    averages over the requested windows smooth the rapid oscillations; the
    plateau is the mean over the trailing half of the horizon.
    """
    L = initial.basis.spec.L
    if L > HEISENBERG_MAX_L:
        raise ResourceError(
            f"heisenberg_scan is guarded to L <= {HEISENBERG_MAX_L}, got L={L}"
        )
    if t_final <= 0 or dt <= 0:
        raise UsageError("t_final and dt must be positive")
    H = sector_hamiltonian(initial.basis, params).toarray()
    energies, vectors = np.linalg.eigh(H)
    c = vectors.conj().T @ initial.data
    w = np.abs(c) ** 2
    ipr = float(np.sum(w**2))

    times = np.arange(0.0, t_final + 0.5 * dt, dt)
    # F(t) = |sum_j w_j e^{-i E_j t}|^2, evaluated in manageable chunks
    fid = np.empty(times.size)
    chunk = max(1, (1 << 22) // max(energies.size, 1))
    for start in range(0, times.size, chunk):
        block = times[start : start + chunk, None]
        amp = np.exp(-1j * block * energies[None, :]) @ w
        fid[start : start + chunk] = np.abs(amp) ** 2

    averaged: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for win in windows:
        n = max(1, int(round(win / dt)))
        n_blocks = times.size // n
        if n_blocks == 0:
            continue
        trimmed = fid[: n_blocks * n].reshape(n_blocks, n)
        centers = times[: n_blocks * n].reshape(n_blocks, n).mean(axis=1)
        averaged[int(win)] = (centers, trimmed.mean(axis=1))

    plateau = float(fid[times >= 0.5 * times[-1]].mean())
    return HeisenbergScan(
        times=times,
        fidelity=fid,
        averaged=averaged,
        plateau=plateau,
        ipr=ipr,
        weights=w,
    )
