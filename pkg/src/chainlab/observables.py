"""Site energies, currents, fluctuation fields and correlation estimates."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .gibbs import ChainState
from .potential import Potential, ThermoSummary
from .rng import RngStream, STREAM_BOOTSTRAP


def site_energies(state: ChainState, potential: Potential) -> np.ndarray:
    """E_i = p_i^2/2 + V(r_i); nonnegative, sums to the total energy."""
    return 0.5 * state.p**2 + np.asarray(potential.v(state.r), dtype=float)


@dataclass
class CurrentSample:
    """Per-bond energy current split into its three pieces.

    Bond i couples sites i and i+1 (mod N).  ``wa`` is the Hamiltonian
    part -p_i V'(r_{i+1}), ``ws`` the noise part
    (gamma/2)(p_i^2 V''(r_{i+1}) - V'(r_{i+1})^2), and ``sigma`` the
    martingale amplitude sqrt(gamma) p_i V'(r_{i+1}).
    """

    wa: np.ndarray
    ws: np.ndarray
    sigma: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.wa + self.ws


def currents(state: ChainState, potential: Potential, gamma: float) -> CurrentSample:
    dv = np.asarray(potential.dv(np.roll(state.r, -1)), dtype=float)
    d2 = np.asarray(potential.d2v(np.roll(state.r, -1)), dtype=float)
    wa = -state.p * dv
    ws = 0.5 * gamma * (state.p**2 * d2 - dv**2)
    sigma = np.sqrt(gamma) * state.p * dv
    out = CurrentSample(wa=wa, ws=ws, sigma=sigma)
    if not (np.all(np.isfinite(wa)) and np.all(np.isfinite(ws))):
        raise FloatingPointError("non-finite current sample")
    return out


@dataclass(frozen=True)
class TestFunction:
    """A periodic lattice test function with precomputed values H(i/N)."""

    kind: str
    values: np.ndarray

    @classmethod
    def fourier(cls, mode: int, n: int, component: str = "cos") -> "TestFunction":
        x = np.arange(n) / n
        if component == "cos":
            vals = np.cos(2.0 * np.pi * mode * x)
        elif component == "sin":
            vals = np.sin(2.0 * np.pi * mode * x)
        else:
            raise ValueError("component must be 'cos' or 'sin'")
        return cls(kind=f"fourier_{component}({mode})", values=vals)

    @classmethod
    def constant(cls, n: int) -> "TestFunction":
        return cls(kind="constant", values=np.ones(n))

    @classmethod
    def from_callable(cls, fn, n: int) -> "TestFunction":
        return cls(kind="callable", values=np.array([fn(i / n) for i in range(n)]))


def fluctuation_field(
    state: ChainState,
    test_fn: TestFunction,
    potential: Potential,
    thermo_summary: ThermoSummary,
) -> float:
    """Centred, sqrt(N)-normalised pairing of site energies with H:
    N^{-1/2} sum_i H(i/N) (E_i - mean energy)."""
    if test_fn.values.shape[0] != state.n:
        raise ValueError("test function was built for a different ring size")
    e = site_energies(state, potential)
    return float(
        (test_fn.values * (e - thermo_summary.mean_energy)).sum() / np.sqrt(state.n)
    )


@dataclass
class CorrelationEstimate:
    """Translation- and replica-averaged energy correlation estimate.

    ``c`` has shape (times, lags) with lags wrapped into (-N/2, N/2];
    ``stderr`` comes from a replica-level bootstrap whose resampled means
    are kept in ``boot`` for downstream estimators.
    """

    times_micro: np.ndarray
    lags: np.ndarray
    c: np.ndarray
    stderr: np.ndarray
    replicas: int
    chi: float
    ebar: float
    boot: np.ndarray | None = field(default=None, repr=False)

    def second_moment(self) -> np.ndarray:
        return (self.c * (self.lags**2)[None, :]).sum(axis=1)

    def second_moment_boot(self) -> np.ndarray:
        if self.boot is None:
            raise ValueError("bootstrap resamples were not retained")
        return (self.boot * (self.lags**2)[None, None, :]).sum(axis=2)


def translation_averaged_correlation(de_t: np.ndarray, de_0: np.ndarray) -> np.ndarray:
    """c[..., k] = (1/N) sum_j de_t[..., j+k] de_0[..., j] (circular)."""
    n = de_t.shape[-1]
    ft = np.fft.rfft(de_t, axis=-1)
    f0 = np.fft.rfft(de_0, axis=-1)
    return np.fft.irfft(ft * np.conj(f0), n=n, axis=-1) / n


def spacetime_correlation(de: np.ndarray) -> np.ndarray:
    """Origin- and translation-averaged correlation of one trajectory.

    ``de`` is (times, sites) of centred energies on an equally spaced
    snapshot grid; in equilibrium every snapshot is an equally good time
    origin, so the estimator at time lag l and space lag k averages
    de[t0+l, j+k] * de[t0, j] over all origins t0 and sites j (circular
    in space, linear in time).  Returns an array of the same shape.
    """
    de = np.asarray(de, dtype=float)
    n_t, n = de.shape
    padded = np.zeros((2 * n_t, n))
    padded[:n_t] = de
    f = np.fft.rfft2(padded)
    raw = np.fft.irfft2(f * np.conj(f), s=(2 * n_t, n))[:n_t]
    origins = (n_t - np.arange(n_t)).astype(float)
    return raw / (n * origins[:, None])


def sort_by_wrapped_lag(values: np.ndarray, n: int):
    """Reorder the last axis from offsets 0..N-1 to lags -N/2+1..N/2."""
    offsets = np.arange(n)
    lags = np.where(offsets <= n // 2, offsets, offsets - n)
    order = np.argsort(lags)
    return lags[order], values[..., order]


def correlation(
    energy_profiles: np.ndarray,
    times_micro: np.ndarray,
    thermo_summary: ThermoSummary,
    n_boot: int = 200,
    seed: int = 0,
    diffusivity_guess: float | None = None,
) -> CorrelationEstimate:
    """Estimate C(i, 0, t) from per-replica energy-profile trajectories.

    ``energy_profiles`` has shape (replicas, times, sites) on an equally
    spaced snapshot grid.  The estimator averages over replicas, lattice
    translations and time origins (stationarity); error bars bootstrap
    whole replicas (translations and origins within a replica are
    correlated, so resampling them would underestimate the variance).
    """
    profiles = np.asarray(energy_profiles, dtype=float)
    if profiles.ndim != 3 or profiles.shape[0] < 2:
        raise ValueError("need (replicas >= 2, times, sites) energy profiles")
    m, n_times, n = profiles.shape
    if len(times_micro) != n_times:
        raise ValueError("times axis mismatch")
    de = profiles - thermo_summary.mean_energy
    per_replica = np.stack([spacetime_correlation(row) for row in de])
    c_mean = per_replica.mean(axis=0)
    g = RngStream(seed, STREAM_BOOTSTRAP).generator()
    idx = g.integers(0, m, size=(n_boot, m))
    boot = np.stack([per_replica[row].mean(axis=0) for row in idx])
    stderr = boot.std(axis=0, ddof=1)
    lags, c_sorted = sort_by_wrapped_lag(c_mean, n)
    _, stderr_sorted = sort_by_wrapped_lag(stderr, n)
    _, boot_sorted = sort_by_wrapped_lag(boot, n)
    est = CorrelationEstimate(
        times_micro=np.asarray(times_micro, dtype=float),
        lags=lags,
        c=c_sorted,
        stderr=stderr_sorted,
        replicas=m,
        chi=thermo_summary.chi,
        ebar=thermo_summary.mean_energy,
        boot=boot_sorted,
    )
    _spread_warning(est, diffusivity_guess)
    return est


def estimate_from_ensemble(result, thermo_summary) -> CorrelationEstimate:
    """Wrap the streaming accumulators of a fast-path ensemble run."""
    n = result.corr_mean.shape[-1]
    lags, c_sorted = sort_by_wrapped_lag(result.corr_mean, n)
    _, boot_sorted = sort_by_wrapped_lag(result.corr_boot, n)
    stderr = boot_sorted.std(axis=0, ddof=1)
    est = CorrelationEstimate(
        times_micro=result.times_micro,
        lags=lags,
        c=c_sorted,
        stderr=stderr,
        replicas=result.replicas,
        chi=thermo_summary.chi,
        ebar=thermo_summary.mean_energy,
        boot=boot_sorted,
    )
    _spread_warning(est, None)
    return est


def _spread_warning(est: CorrelationEstimate, diffusivity_guess: float | None):
    n = est.lags.shape[0]
    d = diffusivity_guess if diffusivity_guess is not None else 0.5
    spread = np.sqrt(2.0 * d * est.times_micro[-1])
    if spread >= n / 4:
        warnings.warn(
            f"correlation spread sqrt(2 D t) ~ {spread:.1f} exceeds a quarter "
            f"ring ({n}/4); wrapped-lag moments are unreliable",
            RuntimeWarning,
        )
