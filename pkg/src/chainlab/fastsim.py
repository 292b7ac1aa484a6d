"""Compiled ensemble driver for the noisy chain.

The reference integrator in :mod:`chainlab.dynamics` is plain Python and
fine for a handful of sites; ensemble experiments need millions of pair
flows per second, so this module runs the identical scheme through a
numba kernel, vectorised over a batch of replicas.

Reproducibility contract: replica m draws every random number it will
ever need from the counter-based stream (seed, m), in a fixed order
(initial state, mixing, then per-chunk noise arrays), and batches of
replicas are reduced in fixed batch order.  The result is therefore
byte-identical for any worker count, and workers are plain processes so
the contract survives a process pool.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import multiprocessing
import numpy as np
from numba import njit, prange

from .gibbs import sample_stretches
from .potential import Potential, beta_of_energy, invert_on_halfline, make_potential, thermo
from .rng import STREAM_BOOTSTRAP, RngStream, replica_stream

BATCH_SIZE = 32  # replicas per work unit; fixed so merges are order-stable

_SQRT2 = math.sqrt(2.0)
_LN2 = math.log(2.0)


# -- scalar helpers (compiled) ---------------------------------------------------


@njit(cache=True, inline="always")
def _vpot(fam, eps, rr):
    if fam == 0:
        return 0.5 * rr * rr
    a = abs(rr)
    return 0.5 * rr * rr + eps * (a + math.log1p(math.exp(-2.0 * a)) - _LN2)


@njit(cache=True, inline="always")
def _vprime(fam, eps, rr):
    if fam == 0:
        return rr
    return rr + eps * math.tanh(rr)


@njit(cache=True, inline="always")
def _vsecond(fam, eps, rr):
    if fam == 0:
        return 1.0
    c = math.cosh(rr)
    return 1.0 + eps / (c * c)


@njit(cache=True)
def _flow_pair_nb(fam, eps, pp, rr, tau):
    """Energy-conserving pair flow; mirrors dynamics._flow_pair."""
    if tau == 0.0:
        return pp, rr
    if fam == 0:
        c = math.cos(tau)
        s = math.sin(tau)
        return pp * c - rr * s, rr * c + pp * s
    e0 = 0.5 * pp * pp + _vpot(fam, eps, rr)
    if e0 == 0.0:
        return pp, rr
    dplus = 1.0 + eps
    nsub = int(math.ceil(abs(tau) * math.sqrt(dplus) / 0.1))
    if nsub < 4:
        nsub = 4
    h = tau / nsub
    for _ in range(nsub):
        k1r = pp
        k1p = -_vprime(fam, eps, rr)
        k2r = pp + 0.5 * h * k1p
        k2p = -_vprime(fam, eps, rr + 0.5 * h * k1r)
        k3r = pp + 0.5 * h * k2p
        k3p = -_vprime(fam, eps, rr + 0.5 * h * k2r)
        k4r = pp + h * k3p
        k4p = -_vprime(fam, eps, rr + h * k3r)
        rr += (h / 6.0) * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)
        pp += (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
    # project back onto the initial pair-energy level along the angle
    sq = math.sqrt(_vpot(fam, eps, rr))
    if rr < 0.0:
        sq = -sq
    theta = math.atan2(sq, pp / _SQRT2)
    pp = math.sqrt(2.0 * e0) * math.cos(theta)
    st = math.sin(theta)
    target = e0 * st * st
    if target <= 0.0:
        rr = 0.0
        return pp, rr
    lo = math.sqrt(2.0 * target / dplus)
    hi = math.sqrt(2.0 * target)
    x = abs(rr)
    if x < lo:
        x = lo
    elif x > hi:
        x = hi
    for _ in range(60):
        f = _vpot(fam, eps, x) - target
        if abs(f) <= 1e-15 * (1.0 + target):
            break
        x -= f / _vprime(fam, eps, x)
        if x < lo:
            x = lo
        elif x > hi:
            x = hi
    if st < 0.0:
        x = -x
    return pp, x


@njit(cache=True)
def _verlet_nb(pb, rb, dvb, fam, eps, dt):
    n = pb.shape[0]
    for i in range(n):
        dvb[i] = _vprime(fam, eps, rb[i])
    for i in range(n):
        ip = i + 1 if i + 1 < n else 0
        pb[i] += 0.5 * dt * (dvb[ip] - dvb[i])
    for i in range(n):
        im = i - 1 if i > 0 else n - 1
        rb[i] += dt * (pb[i] - pb[im])
    for i in range(n):
        dvb[i] = _vprime(fam, eps, rb[i])
    for i in range(n):
        ip = i + 1 if i + 1 < n else 0
        pb[i] += 0.5 * dt * (dvb[ip] - dvb[i])


@njit(cache=True, parallel=True)
def _advance_chunk(
    p,
    r,
    fam,
    eps,
    gamma,
    dt,
    n_halves,
    hamiltonian_on,
    open_chain,
    xi_site,
    xi_bond,
    uu,
    order_buf,
    dv_buf,
    accumulate,
    wprev,
    wsum,
):
    """Advance every replica of the batch by the chunk of steps.

    Array shapes: p, r (B, N); xi_site, xi_bond, uu (B, S, H, N) with S
    steps of H half-sweeps each.  With H = 2 one step is the Strang
    composition half-sweep / Verlet / half-sweep; with H = 1 it is a
    plain noise sweep of the full dt (noise-only experiments).  When
    ``accumulate`` is set the per-bond current is trapezoid-integrated
    into ``wsum`` at step boundaries, with ``wprev`` carrying the last
    boundary values across chunks.
    """
    nb, ns, nh, n = xi_site.shape
    half_dt = dt / n_halves
    amp = math.sqrt(gamma * half_dt)
    for b in prange(nb):
        order = order_buf[b]
        dvb = dv_buf[b]
        for s in range(ns):
            for h in range(nh):
                for i in range(n):
                    order[i] = i
                for j in range(n - 1, 0, -1):
                    k = int(uu[b, s, h, j] * (j + 1))
                    if k > j:
                        k = j
                    tmp = order[j]
                    order[j] = order[k]
                    order[k] = tmp
                for idx in range(n):
                    i = order[idx]
                    pp, rr = _flow_pair_nb(
                        fam, eps, p[b, i], r[b, i], amp * xi_site[b, s, h, i]
                    )
                    p[b, i] = pp
                    r[b, i] = rr
                    if open_chain and i == n - 1:
                        continue
                    j2 = i + 1 if i + 1 < n else 0
                    pp, rr = _flow_pair_nb(
                        fam, eps, p[b, i], r[b, j2], amp * xi_bond[b, s, h, i]
                    )
                    p[b, i] = pp
                    r[b, j2] = rr
                if hamiltonian_on and h == 0 and nh == 2:
                    _verlet_nb(p[b], r[b], dvb, fam, eps, dt)
            if accumulate:
                for i in range(n):
                    j2 = i + 1 if i + 1 < n else 0
                    dvr = _vprime(fam, eps, r[b, j2])
                    d2 = _vsecond(fam, eps, r[b, j2])
                    w = -p[b, i] * dvr + 0.5 * gamma * (
                        p[b, i] * p[b, i] * d2 - dvr * dvr
                    )
                    wsum[b, i] += 0.5 * (wprev[b, i] + w) * dt
                    wprev[b, i] = w


# -- ensemble configuration -------------------------------------------------------


@dataclass(frozen=True)
class EnsembleConfig:
    """One ensemble experiment on the fast path.

    ``beta`` selects product-measure initial states; setting ``energy``
    instead selects shell initial states (exact rescaling plus
    ``mixing_sweeps`` noise-only sweeps before time zero).  ``tilt``
    multiplies the initial site energies by (1 + tilt_i) after mixing,
    for relaxation experiments.  ``series_weights`` (K, N) requests the
    per-snapshot series sum_i w_k(i) (E_i - reference); correlation
    collection requests translation-averaged profile correlations
    against time zero.
    """

    family: str
    epsilon: float
    beta: float | None
    energy: float | None
    gamma: float
    n_sites: int
    replicas: int
    dt: float
    n_steps: int
    snap_every: int
    seed: int
    hamiltonian: bool = True
    open_chain: bool = False
    mixing_sweeps: int = 0
    mixing_dt: float = 1.0
    tilt: tuple | None = None
    collect_correlation: bool = False
    series_weights: tuple | None = None  # tuple of tuples, shape (K, N)
    collect_invariance: bool = False
    accumulate_currents: bool = False
    n_boot: int = 200
    replica_offset: int = 0

    def validate(self) -> None:
        if (self.beta is None) == (self.energy is None):
            raise ValueError("exactly one of beta or energy must be set")
        if self.family not in ("harmonic", "log-cosh", "logcosh"):
            raise ValueError(
                f"no compiled kernel for potential family {self.family!r}"
            )
        if self.n_steps % self.snap_every != 0:
            raise ValueError("n_steps must be a multiple of snap_every")
        if self.replicas < 1 or self.n_sites < 2:
            raise ValueError("need replicas >= 1 and n_sites >= 2")
        if self.gamma < 0 or self.dt <= 0:
            raise ValueError("need gamma >= 0 and dt > 0")


@dataclass
class EnsembleResult:
    times_micro: np.ndarray
    lags: np.ndarray | None = None
    corr_mean: np.ndarray | None = None        # (T+1, N)
    corr_boot: np.ndarray | None = None        # (n_boot, T+1, N)
    series: np.ndarray | None = None           # (M, T+1, K)
    invariance: np.ndarray | None = None        # (M, 4): p^2, V'r, E, W
    h_drift: np.ndarray | None = None           # (M,) max |H(t)-H(0)|/|H(0)|
    ito_de: np.ndarray | None = None            # (M, N) E_i(T) - E_i(0)
    ito_wint: np.ndarray | None = None          # (M, N) trapezoid bond integrals
    replicas: int = 0
    ebar: float = 0.0
    chi: float = 0.0
    beta: float = 0.0


def _energies(pot: Potential, p: np.ndarray, r: np.ndarray) -> np.ndarray:
    return 0.5 * p * p + np.asarray(pot.v(r), dtype=float)


def _bond_currents(pot: Potential, gamma: float, p, r) -> np.ndarray:
    dv = np.asarray(pot.dv(np.roll(r, -1, axis=-1)), dtype=float)
    d2 = np.asarray(pot.d2v(np.roll(r, -1, axis=-1)), dtype=float)
    return -p * dv + 0.5 * gamma * (p * p * d2 - dv * dv)


def wrapped_lags(n: int) -> np.ndarray:
    """Offsets 0..n-1 mapped into (-n/2, n/2]."""
    k = np.arange(n)
    return np.where(k <= n // 2, k, k - n)


def _mix_inplace(p, r, pot, gens, dt_mix, sweeps, open_chain):
    """Noise-only sweeps before time zero (shell mixing)."""
    nb, n = p.shape
    fam, eps = pot.family_code, pot.epsilon
    order_buf = np.empty((nb, n), dtype=np.int64)
    dv_buf = np.empty((nb, n))
    dummy = np.zeros((nb, n))
    chunk = 64
    done = 0
    while done < sweeps:
        s = min(chunk, sweeps - done)
        xi_site = np.empty((nb, s, 1, n))
        xi_bond = np.empty((nb, s, 1, n))
        uu = np.empty((nb, s, 1, n))
        for b, g in enumerate(gens):
            xi_site[b, :, 0, :] = g.standard_normal((s, n))
            xi_bond[b, :, 0, :] = g.standard_normal((s, n))
            uu[b, :, 0, :] = g.random((s, n))
        _advance_chunk(
            p, r, fam, eps, 1.0, dt_mix, 1, False, open_chain,
            xi_site, xi_bond, uu, order_buf, dv_buf, False, dummy, dummy,
        )
        done += s


def _simulate_batch(cfg: EnsembleConfig, lo: int, hi: int) -> dict:
    """Simulate replicas [lo, hi) and return their per-replica reductions."""
    pot = make_potential(cfg.family, epsilon=cfg.epsilon)
    fam, eps = pot.family_code, pot.epsilon
    n, nb = cfg.n_sites, hi - lo
    beta = cfg.beta if cfg.beta is not None else beta_of_energy(pot, cfg.energy)
    ebar = (
        thermo(pot, beta).mean_energy if cfg.beta is not None else cfg.energy
    )
    gens = [replica_stream(cfg.seed, cfg.replica_offset + m).generator()
            for m in range(lo, hi)]

    # initial states, one replica stream at a time
    p = np.empty((nb, n))
    r = np.empty((nb, n))
    for b, g in enumerate(gens):
        p[b] = g.standard_normal(n) / math.sqrt(beta)
        r[b] = sample_stretches(pot, beta, n, g)
    if cfg.energy is not None:
        e = _energies(pot, p, r)
        theta = np.arctan2(
            np.sign(r) * np.sqrt(np.asarray(pot.v(r), dtype=float)), p / _SQRT2
        )
        e *= (cfg.energy * n / e.sum(axis=1))[:, None]
        st = np.sin(theta)
        p = np.sqrt(2.0 * e) * np.cos(theta)
        r = np.sign(st) * invert_on_halfline(pot, e * st * st)
        if cfg.mixing_sweeps:
            _mix_inplace(p, r, pot, gens, cfg.mixing_dt, cfg.mixing_sweeps,
                         cfg.open_chain)
    if cfg.tilt is not None:
        tilt = np.asarray(cfg.tilt, dtype=float)
        e = _energies(pot, p, r) * (1.0 + tilt)[None, :]
        theta = np.arctan2(
            np.sign(r) * np.sqrt(np.asarray(pot.v(r), dtype=float)), p / _SQRT2
        )
        st = np.sin(theta)
        p = np.sqrt(2.0 * e) * np.cos(theta)
        r = np.sign(st) * invert_on_halfline(pot, e * st * st)

    n_snaps = cfg.n_steps // cfg.snap_every
    weights = (
        np.asarray(cfg.series_weights, dtype=float)
        if cfg.series_weights is not None
        else None
    )

    e0 = _energies(pot, p, r)
    h0 = e0.sum(axis=1)
    out: dict = {}
    need_profiles = cfg.collect_correlation or weights is not None
    if need_profiles:
        prof = np.empty((nb, n_snaps + 1, n))
        prof[:, 0, :] = e0
    h_drift = np.zeros(nb)

    order_buf = np.empty((nb, n), dtype=np.int64)
    dv_buf = np.empty((nb, n))
    if cfg.accumulate_currents:
        wprev = _bond_currents(pot, cfg.gamma, p, r)
        wsum = np.zeros((nb, n))
    else:
        wprev = np.zeros((nb, n))
        wsum = np.zeros((nb, n))

    n_halves = 2 if cfg.hamiltonian else 1
    s = cfg.snap_every
    for t_idx in range(1, n_snaps + 1):
        xi_site = np.empty((nb, s, n_halves, n))
        xi_bond = np.empty((nb, s, n_halves, n))
        uu = np.empty((nb, s, n_halves, n))
        for b, g in enumerate(gens):
            xi_site[b] = g.standard_normal((s, n_halves, n))
            xi_bond[b] = g.standard_normal((s, n_halves, n))
            uu[b] = g.random((s, n_halves, n))
        _advance_chunk(
            p, r, fam, eps, cfg.gamma, cfg.dt, n_halves, cfg.hamiltonian,
            cfg.open_chain, xi_site, xi_bond, uu, order_buf, dv_buf,
            cfg.accumulate_currents, wprev, wsum,
        )
        et = _energies(pot, p, r)
        h_drift = np.maximum(
            h_drift, np.abs(et.sum(axis=1) - h0) / np.abs(h0)
        )
        if need_profiles:
            prof[:, t_idx, :] = et

    if need_profiles:
        de = prof - ebar
        if cfg.collect_correlation:
            from .observables import spacetime_correlation

            out["corr"] = np.stack([spacetime_correlation(row) for row in de])
        if weights is not None:
            out["series"] = de @ weights.T
    if cfg.collect_invariance:
        dv = np.asarray(pot.dv(r), dtype=float)
        out["invariance"] = np.stack(
            [
                (p * p).mean(axis=1),
                (dv * r).mean(axis=1),
                _energies(pot, p, r).mean(axis=1),
                _bond_currents(pot, cfg.gamma, p, r).mean(axis=1),
            ],
            axis=1,
        )
    if cfg.accumulate_currents:
        out["ito_de"] = _energies(pot, p, r) - e0
        out["ito_wint"] = wsum
    out["h_drift"] = h_drift
    return out


def _batch_bounds(replicas: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + BATCH_SIZE, replicas)) for lo in range(0, replicas, BATCH_SIZE)]


def run_ensemble(cfg: EnsembleConfig, parallelism: int = 1) -> EnsembleResult:
    """Run the ensemble and reduce per-replica results in fixed order.

    ``parallelism`` only controls how many worker processes simulate the
    fixed-size replica batches; every reduction happens in batch order in
    the parent, so outputs are identical for any value.
    """
    cfg.validate()
    pot = make_potential(cfg.family, epsilon=cfg.epsilon)
    beta = cfg.beta if cfg.beta is not None else beta_of_energy(pot, cfg.energy)
    th = thermo(pot, beta)
    ebar = th.mean_energy if cfg.beta is not None else cfg.energy

    n_snaps = cfg.n_steps // cfg.snap_every
    times = np.arange(n_snaps + 1) * (cfg.snap_every * cfg.dt)
    result = EnsembleResult(
        times_micro=times,
        replicas=cfg.replicas,
        ebar=float(ebar),
        chi=float(th.chi),
        beta=float(beta),
    )

    bounds = _batch_bounds(cfg.replicas)
    if cfg.collect_correlation:
        boot_gen = RngStream(cfg.seed, STREAM_BOOTSTRAP).generator()
        idx = boot_gen.integers(0, cfg.replicas, size=(cfg.n_boot, cfg.replicas))
        counts = np.stack(
            [np.bincount(row, minlength=cfg.replicas) for row in idx]
        ).astype(float)
        c_sum = np.zeros((n_snaps + 1, cfg.n_sites))
        c_boot = np.zeros((cfg.n_boot, (n_snaps + 1) * cfg.n_sites))
        result.lags = wrapped_lags(cfg.n_sites)

    series_parts: list[np.ndarray] = []
    invariance_parts: list[np.ndarray] = []
    hdrift_parts: list[np.ndarray] = []
    de_parts: list[np.ndarray] = []
    wint_parts: list[np.ndarray] = []

    def consume(lo: int, hi: int, out: dict) -> None:
        if cfg.collect_correlation:
            corr = out["corr"]
            c_sum[:] += corr.sum(axis=0)
            c_boot[:] += counts[:, lo:hi] @ corr.reshape(hi - lo, -1)
        if "series" in out:
            series_parts.append(out["series"])
        if "invariance" in out:
            invariance_parts.append(out["invariance"])
        if "ito_de" in out:
            de_parts.append(out["ito_de"])
            wint_parts.append(out["ito_wint"])
        hdrift_parts.append(out["h_drift"])

    if parallelism <= 1 or len(bounds) == 1:
        for lo, hi in bounds:
            consume(lo, hi, _simulate_batch(cfg, lo, hi))
    else:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=parallelism, mp_context=ctx) as pool:
            futures = [pool.submit(_simulate_batch, cfg, lo, hi) for lo, hi in bounds]
            for (lo, hi), fut in zip(bounds, futures):
                consume(lo, hi, fut.result())

    m = float(cfg.replicas)
    if cfg.collect_correlation:
        result.corr_mean = c_sum / m
        result.corr_boot = (c_boot / m).reshape(cfg.n_boot, n_snaps + 1, cfg.n_sites)
    if series_parts:
        result.series = np.concatenate(series_parts, axis=0)
    if invariance_parts:
        result.invariance = np.concatenate(invariance_parts, axis=0)
    if de_parts:
        result.ito_de = np.concatenate(de_parts, axis=0)
        result.ito_wint = np.concatenate(wint_parts, axis=0)
    result.h_drift = np.concatenate(hdrift_parts, axis=0)
    return result


def simulate_trajectory(
    potential: Potential,
    p0: np.ndarray,
    r0: np.ndarray,
    gamma: float,
    dt: float,
    n_steps: int,
    snap_every: int,
    rng,
    hamiltonian: bool = True,
    open_chain: bool = False,
):
    """Single-trajectory fast path: returns (times, energy snapshots, p, r).

    Consumes randomness exactly like one replica of :func:`run_ensemble`.
    """
    if n_steps % snap_every != 0:
        raise ValueError("n_steps must be a multiple of snap_every")
    pot = potential
    if pot.family_code < 0:
        raise ValueError("no compiled kernel for custom potentials")
    g = rng.generator() if isinstance(rng, RngStream) else rng
    n = p0.shape[0]
    p = p0[None, :].astype(float).copy()
    r = r0[None, :].astype(float).copy()
    order_buf = np.empty((1, n), dtype=np.int64)
    dv_buf = np.empty((1, n))
    dummy = np.zeros((1, n))
    n_halves = 2 if hamiltonian else 1
    n_snaps = n_steps // snap_every
    snaps = np.empty((n_snaps + 1, n))
    snaps[0] = _energies(pot, p, r)[0]
    for t_idx in range(1, n_snaps + 1):
        s = snap_every
        xi_site = g.standard_normal((1, s, n_halves, n))
        xi_bond = g.standard_normal((1, s, n_halves, n))
        uu = g.random((1, s, n_halves, n))
        _advance_chunk(
            p, r, pot.family_code, pot.epsilon, gamma, dt, n_halves,
            hamiltonian, open_chain, xi_site, xi_bond, uu, order_buf, dv_buf,
            False, dummy, dummy,
        )
        snaps[t_idx] = _energies(pot, p, r)[0]
    times = np.arange(n_snaps + 1) * (snap_every * dt)
    return times, snaps, p[0], r[0]
