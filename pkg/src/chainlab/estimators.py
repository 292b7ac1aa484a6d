"""Diffusivity estimators and bound certificates.

Three independent routes to the same transport coefficient:

* ``green_kubo_diffusivity`` fits the growth of the wrapped second
  spatial moment of the energy correlation, m(t) = 2 chi D t + c;
* ``mode_relaxation`` fits the exponential decay rate of long-wavelength
  energy-fluctuation modes, D = rate / (2 pi n)^2 in macroscopic time;
* the Galerkin solver in :mod:`chainlab.variational` minimises the
  variational characterisation directly.

``kappa_bounds`` evaluates the closed-form conductivity bounds from
single-bond moments, and ``gap_relaxation`` measures the noise-only
relaxation time of an open segment, which scales diffusively with its
length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .observables import CorrelationEstimate
from .potential import Potential, ThermoSummary
from .rng import RngStream, STREAM_BOOTSTRAP


class FitError(RuntimeError):
    """Raised when an estimator cannot produce a usable fit."""


@dataclass
class DiffusivityEstimate:
    method: str
    d_hat: float
    stderr: float
    fit_window: tuple[float, float]
    diagnostics: dict = field(default_factory=dict)

    def csv_row(self) -> list:
        return [
            self.method,
            self.d_hat,
            self.stderr,
            self.fit_window[0],
            self.fit_window[1],
        ]


@dataclass
class KappaBounds:
    """Closed-form conductivity bounds: gamma/(4 beta <r^2>) from below,
    gamma <V''>/4 + 3/(4 gamma) from above."""

    lower: float
    upper: float
    beta: float
    gamma: float

    def __post_init__(self):
        if self.lower > self.upper + 1e-12:
            raise ValueError("bounds crossed; thermodynamic inputs are inconsistent")

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= value <= self.upper + slack


def kappa_bounds(thermo_summary: ThermoSummary, gamma: float) -> KappaBounds:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    lower = gamma / (4.0 * thermo_summary.beta * thermo_summary.mean_r2)
    upper = gamma * thermo_summary.mean_d2v / 4.0 + 3.0 / (4.0 * gamma)
    return KappaBounds(lower=lower, upper=upper, beta=thermo_summary.beta, gamma=gamma)


def _weighted_line_fit(x, y, w):
    a = np.stack([x, np.ones_like(x)], axis=1) * w[:, None]
    coef, *_ = np.linalg.lstsq(a, y * w, rcond=None)
    return coef  # slope, intercept


def green_kubo_diffusivity(
    est: CorrelationEstimate,
    thermo_summary: ThermoSummary,
    fit_window: tuple[float, float] = (0.25, 1.0),
) -> DiffusivityEstimate:
    """Slope estimator for the diffusivity from correlation data.

    Computes m(t) = sum_i i^2 C(i, 0, t) over wrapped lags and fits
    m(t) = 2 chi D t + c by least squares weighted with the bootstrap
    errors of m(t), over the window [f0, f1]*t_max.  The intercept
    absorbs both short-time transients and the static quadratic-form
    noise of the empty lags, which is almost constant in time.
    """
    t = est.times_micro
    n = est.lags.shape[0]
    t_max = t[-1]
    lo, hi = fit_window[0] * t_max, fit_window[1] * t_max
    mask = (t >= lo) & (t <= hi)
    if mask.sum() < 5:
        raise FitError("need at least 5 correlation times in the fit window")
    chi = thermo_summary.chi
    m2 = est.second_moment()
    m2_boot = est.second_moment_boot()
    se = m2_boot.std(axis=0, ddof=1)
    if np.any(se[mask] <= 0):
        raise FitError("degenerate bootstrap errors in the fit window")
    w = 1.0 / se[mask]
    x = 2.0 * chi * t[mask]
    d_hat, intercept = _weighted_line_fit(x, m2[mask], w)
    if d_hat <= 0:
        raise FitError(f"nonpositive slope {d_hat!r}; no diffusive growth detected")
    spread = math.sqrt(2.0 * d_hat * t_max)
    if spread >= n / 4:
        raise FitError(
            f"spread guard violated: sqrt(2 D t_max) = {spread:.2f} >= N/4 = {n/4:.1f}"
        )
    boot_d = np.array(
        [_weighted_line_fit(x, m2_boot[b][mask], w)[0] for b in range(m2_boot.shape[0])]
    )
    resid = m2[mask] - (x * d_hat + intercept)
    return DiffusivityEstimate(
        method="green_kubo_slope",
        d_hat=float(d_hat),
        stderr=float(boot_d.std(ddof=1)),
        fit_window=(float(lo), float(hi)),
        diagnostics={
            "intercept": float(intercept),
            "n_points": int(mask.sum()),
            "spread": float(spread),
            "weighted_rms_residual": float(np.sqrt(np.mean((resid * w) ** 2))),
            "m2_last": float(m2[-1]),
        },
    )


def mode_autocorrelation(series: np.ndarray):
    """Origin-averaged per-replica autocorrelation numerators.

    ``series`` is (replicas, times, quadratures); returns (replicas,
    lags) with entry (m, l) the average over time origins and quadratures
    of Y(t0) Y(t0+l).
    """
    m, n_t, _ = series.shape
    out = np.empty((m, n_t))
    for lag in range(n_t):
        prods = series[:, : n_t - lag, :] * series[:, lag:, :]
        out[:, lag] = prods.mean(axis=(1, 2))
    return out


def mode_relaxation(
    series: np.ndarray,
    times_micro: np.ndarray,
    n_sites: int,
    mode: int,
    thermo_summary: ThermoSummary,
    rho_window: tuple[float, float] = (0.2, 0.9),
    n_boot: int = 200,
    seed: int = 0,
) -> DiffusivityEstimate:
    """Diffusivity from the decay of one energy-fluctuation mode.

    ``series`` holds per-replica trajectories of the two quadratures of
    the mode on shared snapshot times.  The equilibrium autocorrelation
    rho(t) is fitted log-linearly over the lags where it sits inside
    ``rho_window``, in macroscopic time (micro time / N^2); the rate
    divided by (2 pi n)^2 is the diffusivity.
    """
    series = np.asarray(series, dtype=float)
    if series.ndim != 3 or series.shape[0] < 2:
        raise ValueError("need (replicas >= 2, times, quadratures) mode series")
    m = series.shape[0]
    num = mode_autocorrelation(series)
    rho = num.mean(axis=0)
    rho0 = rho[0]
    if rho0 <= 0:
        raise FitError("degenerate mode variance")
    rho_n = rho / rho0
    lags = np.arange(series.shape[1])
    usable = (lags > 0) & (rho_n >= rho_window[0]) & (rho_n <= rho_window[1])
    if usable.sum() < 3:
        raise FitError(
            f"insufficient decay: only {int(usable.sum())} autocorrelation points "
            f"inside rho window {rho_window}"
        )
    t_macro = times_micro / n_sites**2

    g = RngStream(seed, STREAM_BOOTSTRAP + 1).generator()
    idx = g.integers(0, m, size=(n_boot, m))
    boot_rho = np.stack([num[row].mean(axis=0) for row in idx])
    boot_rho /= boot_rho[:, :1]
    se_log = boot_rho[:, usable].std(axis=0, ddof=1) / rho_n[usable]

    x = t_macro[usable]
    y = np.log(rho_n[usable])
    w = 1.0 / np.maximum(se_log, 1e-12)
    slope, intercept = _weighted_line_fit(x, y, w)
    rate = -slope
    if rate <= 0:
        raise FitError("mode autocorrelation is not decaying")
    boot_rates = []
    for b in range(n_boot):
        rb = boot_rho[b][usable]
        if np.any(rb <= 0):
            continue
        sb, _ = _weighted_line_fit(x, np.log(rb), w)
        boot_rates.append(-sb)
    boot_rates = np.array(boot_rates)
    k2 = (2.0 * math.pi * mode) ** 2
    var0 = num[:, 0]
    return DiffusivityEstimate(
        method="mode_relaxation",
        d_hat=float(rate / k2),
        stderr=float(boot_rates.std(ddof=1) / k2),
        fit_window=(float(x[0]), float(x[-1])),
        diagnostics={
            "rate_macro": float(rate),
            "rate_stderr": float(boot_rates.std(ddof=1)),
            "n_points": int(usable.sum()),
            "rho_range": (float(rho_n[usable].min()), float(rho_n[usable].max())),
            "static_var": float(var0.mean()),
            "static_var_stderr": float(var0.std(ddof=1) / math.sqrt(m)),
            "static_var_expected": float(thermo_summary.chi / 2.0),
        },
    )


# -- noise-only relaxation of an open segment -----------------------------------


@dataclass
class GapRow:
    length: int
    tau_hat: float
    stderr: float
    diagnostics: dict = field(default_factory=dict)


def neumann_mode_profile(length: int) -> np.ndarray:
    """Slowest mean-zero energy profile of the open segment:
    cos(pi (i + 1/2) / L)."""
    i = np.arange(length)
    return np.cos(math.pi * (i + 0.5) / length)


def relaxation_time_from_series(
    series: np.ndarray,
    times: np.ndarray,
    window: tuple[float, float] = (0.1, 0.8),
    n_boot: int = 200,
    seed: int = 0,
) -> tuple[float, float, dict]:
    """Exponential time constant of the ensemble-mean profile amplitude.

    Fits log of mean(series)(t)/mean(series)(0) over the times where the
    normalised mean lies inside ``window``; bootstrap over replicas.
    Returns (tau, stderr, diagnostics).
    """
    series = np.asarray(series, dtype=float)
    m = series.shape[0]
    phi = series.mean(axis=0)
    phi0 = phi[0]
    if phi0 <= 0:
        raise FitError("profile amplitude must start positive")
    norm = phi / phi0
    usable = (np.arange(len(norm)) > 0) & (norm >= window[0]) & (norm <= window[1])
    if usable.sum() < 4:
        raise FitError(
            "insufficient decay for a relaxation fit; extend the horizon "
            f"(normalised amplitude range {norm.min():.3f}..{norm[1]:.3f})"
        )
    g = RngStream(seed, STREAM_BOOTSTRAP + 2).generator()
    idx = g.integers(0, m, size=(n_boot, m))
    boot_phi = np.stack([series[row].mean(axis=0) for row in idx])
    boot_phi /= boot_phi[:, :1]
    se_log = boot_phi[:, usable].std(axis=0, ddof=1) / np.abs(norm[usable])
    x = times[usable]
    y = np.log(norm[usable])
    w = 1.0 / np.maximum(se_log, 1e-12)
    slope, _ = _weighted_line_fit(x, y, w)
    if slope >= 0:
        raise FitError("profile amplitude is not decaying")
    taus = []
    for b in range(n_boot):
        nb = boot_phi[b][usable]
        if np.any(nb <= 0):
            continue
        sb, _ = _weighted_line_fit(x, np.log(nb), w)
        if sb < 0:
            taus.append(-1.0 / sb)
    taus = np.array(taus)
    # crude exponentiality diagnostic: rms log-residual in the window
    resid = y - (slope * x + (y - slope * x).mean())
    diag = {
        "n_points": int(usable.sum()),
        "rms_log_residual": float(np.sqrt(np.mean(resid**2))),
        "amplitude0": float(phi0),
        "boot_kept": int(len(taus)),
    }
    return float(-1.0 / slope), float(taus.std(ddof=1)), diag


def gap_relaxation(
    potential: Potential,
    lengths: list[int],
    energy: float,
    seed: int,
    replicas: int = 1024,
    gamma: float = 1.0,
    dt: float = 0.6,
    tilt_amplitude: float = 0.8,
    sweeps_per_l2: float = 4.0,
    parallelism: int = 1,
) -> list[GapRow]:
    """Relaxation time of the slowest energy mode under noise-only
    dynamics on open segments of the given lengths.

    Starts from shell-projected states tilted by a mean-zero slowly
    varying energy profile and fits the exponential decay of the profile
    amplitude.  The time constants are reported in microscopic time and
    scale like L^2 (the diffusive spectral-gap scaling); they do not
    depend on the energy per site for the harmonic chain.
    """
    if min(lengths) < 4:
        raise ValueError("segment lengths must be at least 4")
    if energy <= 0:
        raise ValueError("energy must be positive")
    from .fastsim import EnsembleConfig, run_ensemble

    rows = []
    for length in lengths:
        profile = neumann_mode_profile(length)
        n_steps = int(math.ceil(sweeps_per_l2 * length * length / 64.0)) * 64
        snap_every = max(1, n_steps // 128)
        n_steps = (n_steps // snap_every) * snap_every
        cfg = EnsembleConfig(
            family=potential.family,
            epsilon=potential.epsilon,
            beta=None,
            energy=energy,
            gamma=gamma,
            n_sites=length,
            replicas=replicas,
            dt=dt,
            n_steps=n_steps,
            snap_every=snap_every,
            seed=seed,
            hamiltonian=False,
            open_chain=True,
            mixing_sweeps=4 * length,
            tilt=tuple(tilt_amplitude * profile),
            series_weights=(tuple(profile),),
        )
        res = run_ensemble(cfg, parallelism=parallelism)
        tau, se, diag = relaxation_time_from_series(
            res.series[:, :, 0], res.times_micro, seed=seed
        )
        diag["n_steps"] = n_steps
        diag["dt"] = dt
        rows.append(GapRow(length=length, tau_hat=tau, stderr=se, diagnostics=diag))
    return rows
