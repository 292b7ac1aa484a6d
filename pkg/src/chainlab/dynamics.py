"""Reference integrator for the noisy Hamiltonian ring.

One time step is a Strang composition: half a noise sweep, one velocity
Verlet step of the lattice Hamiltonian flow, half a noise sweep.  Each
noise sweep visits the sites in a freshly randomized order and advances
two exactly energy-conserving pair flows per site (the single-site
rotation and the bond coupling) for independent centred Gaussian times
of variance gamma*dt, which is the exact solution of the corresponding
Stratonovich noise and makes total-energy conservation pathwise exact.

Everything here favours clarity over speed; the compiled ensemble driver
in :mod:`chainlab.fastsim` consumes random numbers draw-for-draw
identically, so small cases can be compared between the two paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gibbs import ChainState, _as_generator
from .potential import Potential, invert_on_halfline


@dataclass(frozen=True)
class SimParams:
    """All symbols of one simulation run (microscopic time units)."""

    beta: float
    gamma: float
    n_sites: int
    dt_micro: float
    potential: Potential
    substeps_flow: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.n_sites < 2:
            raise ValueError("need at least two sites")
        if self.dt_micro <= 0:
            raise ValueError("dt_micro must be positive")
        guard = 0.1 / math.sqrt(self.potential.delta_plus)
        if self.dt_micro > guard:
            raise ValueError(
                f"dt_micro={self.dt_micro:g} exceeds the stability guard "
                f"0.1/sqrt(delta_plus)={guard:g}"
            )
        if self.substeps_flow < 1:
            raise ValueError("substeps_flow must be positive")


@dataclass
class StepReport:
    h_before: float
    h_after: float
    flow_projection_residual: float


# -- single pair flows --------------------------------------------------------


def _flow_pair(pp: float, rr: float, tau: float, potential: Potential, base_substeps: int):
    """Advance (p, r) along dr/ds = p, dp/ds = -V'(r) for time tau.

    Harmonic pairs rotate exactly.  Otherwise classical RK4 with a
    substep count tied to |tau|, then a projection back onto the initial
    energy level along the angle coordinate, so the pair energy is
    conserved to rounding.  Returns (p, r, relative energy defect).
    """
    if tau == 0.0:
        return pp, rr, 0.0
    if potential.family_code == 0:
        c, s = math.cos(tau), math.sin(tau)
        return pp * c - rr * s, rr * c + pp * s, 0.0
    e0 = 0.5 * pp * pp + float(potential.v(rr))
    if e0 == 0.0:
        return pp, rr, 0.0
    nsub = max(base_substeps, int(math.ceil(abs(tau) * math.sqrt(potential.delta_plus) / 0.1)))
    h = tau / nsub
    for _ in range(nsub):
        k1r, k1p = pp, -float(potential.dv(rr))
        k2r, k2p = pp + 0.5 * h * k1p, -float(potential.dv(rr + 0.5 * h * k1r))
        k3r, k3p = pp + 0.5 * h * k2p, -float(potential.dv(rr + 0.5 * h * k2r))
        k4r, k4p = pp + h * k3p, -float(potential.dv(rr + h * k3r))
        rr += (h / 6.0) * (k1r + 2 * k2r + 2 * k3r + k4r)
        pp += (h / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p)
    # project back to the initial energy level, keeping the angle
    theta = math.atan2(
        math.copysign(math.sqrt(float(potential.v(rr))), rr), pp / math.sqrt(2.0)
    )
    pp = math.sqrt(2.0 * e0) * math.cos(theta)
    st = math.sin(theta)
    target = e0 * st * st
    rr = math.copysign(float(invert_on_halfline(potential, np.array([target]))[0]), st)
    defect = abs(0.5 * pp * pp + float(potential.v(rr)) - e0) / max(e0, 1e-300)
    return pp, rr, defect


def flow_site(state: ChainState, i: int, tau: float, potential: Potential,
              substeps: int = 4) -> ChainState:
    """Flow of the single-site rotation field at site i for time tau;
    conserves the site energy exactly and touches nothing else."""
    out = state.copy()
    i %= out.n
    out.p[i], out.r[i], _ = _flow_pair(out.p[i], out.r[i], tau, potential, substeps)
    return out


def flow_bond(state: ChainState, i: int, tau: float, potential: Potential,
              substeps: int = 4) -> ChainState:
    """Flow of the bond coupling field (p_i with r_{i+1}) for time tau;
    conserves p_i^2/2 + V(r_{i+1}) and hence the total energy exactly."""
    out = state.copy()
    i %= out.n
    j = (i + 1) % out.n
    out.p[i], out.r[j], _ = _flow_pair(out.p[i], out.r[j], tau, potential, substeps)
    return out


# -- Verlet step --------------------------------------------------------------


def hamiltonian_step(state: ChainState, dt: float, potential: Potential) -> ChainState:
    """One velocity Verlet step of r' = p_j - p_{j-1}, p' = V'(r_{j+1}) - V'(r_j)
    on the ring; symplectic and time reversible."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    p = state.p.copy()
    r = state.r.copy()
    dv = np.asarray(potential.dv(r), dtype=float)
    p += 0.5 * dt * (np.roll(dv, -1) - dv)
    r += dt * (p - np.roll(p, 1))
    dv = np.asarray(potential.dv(r), dtype=float)
    p += 0.5 * dt * (np.roll(dv, -1) - dv)
    return ChainState(p, r)


# -- noise sweep ---------------------------------------------------------------


def _shuffled_order(n: int, u: np.ndarray) -> np.ndarray:
    """Fisher-Yates permutation driven by the uniforms u[1..n-1].

    Kept in this explicit form so that the compiled driver can consume
    the identical uniforms and produce the identical ordering.
    """
    order = np.arange(n, dtype=np.int64)
    for j in range(n - 1, 0, -1):
        k = int(u[j] * (j + 1))
        if k > j:
            k = j
        order[j], order[k] = order[k], order[j]
    return order


def _noise_sweep_inplace(p, r, dt, gamma, g, potential, substeps, open_chain=False):
    n = p.shape[0]
    xi_site = g.standard_normal(n)
    xi_bond = g.standard_normal(n)
    u = g.random(n)
    order = _shuffled_order(n, u)
    amp = math.sqrt(gamma * dt)
    worst = 0.0
    for i in order:
        p[i], r[i], d1 = _flow_pair(p[i], r[i], amp * xi_site[i], potential, substeps)
        worst = max(worst, d1)
        if open_chain and i == n - 1:
            continue
        j = (i + 1) % n
        p[i], r[j], d2 = _flow_pair(p[i], r[j], amp * xi_bond[i], potential, substeps)
        worst = max(worst, d2)
    return worst


def noise_sweep(state: ChainState, dt: float, gamma: float, rng,
                potential: Potential, substeps: int = 4,
                open_chain: bool = False) -> ChainState:
    """One full sweep of the stochastic part: every site, in a freshly
    randomized order, gets its two pair flows for independent Gaussian
    times of standard deviation sqrt(gamma*dt).  Conserves the total
    energy pathwise (up to flow projection tolerance); gamma = 0 is the
    identity."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    out = state.copy()
    g = _as_generator(rng)
    _noise_sweep_inplace(out.p, out.r, dt, gamma, g, potential, substeps, open_chain)
    return out


def step(state: ChainState, params: SimParams, rng) -> tuple[ChainState, StepReport]:
    """Advance one microscopic time step dt by the Strang composition
    (half noise sweep, Verlet step, half noise sweep)."""
    g = _as_generator(rng)
    pot = params.potential
    h0 = state.total_energy(pot)
    out = state.copy()
    w1 = _noise_sweep_inplace(
        out.p, out.r, 0.5 * params.dt_micro, params.gamma, g, pot, params.substeps_flow
    )
    out = hamiltonian_step(out, params.dt_micro, pot)
    w2 = _noise_sweep_inplace(
        out.p, out.r, 0.5 * params.dt_micro, params.gamma, g, pot, params.substeps_flow
    )
    return out, StepReport(h0, out.total_energy(pot), max(w1, w2))


# -- numerical generator application -------------------------------------------


def apply_generator_numeric(
    f,
    window,
    state: ChainState,
    potential: Potential,
    gamma: float,
    h: float = 2.5e-3,
    substeps: int = 64,
) -> float:
    """Evaluate the full generator on a smooth observable at one state.

    ``f`` maps a :class:`ChainState` to a float and depends only on the
    sites in ``window``.  First and second derivatives along every
    single-site and bond field touching the window are taken by 4th-order
    central differences of f along the exact pair flows, with stencil
    step h; the drift part sums (site - bond) first derivatives and the
    noise part adds gamma/2 times the second derivatives.
    """
    window = sorted(set(int(i) % state.n for i in window))
    if not window:
        raise ValueError("window must contain at least one site")

    def along(kind: str, i: int, s: float) -> float:
        if s == 0.0:
            return f(state)
        moved = state.copy()
        idx = i % moved.n
        jdx = idx if kind == "site" else (idx + 1) % moved.n
        moved.p[idx], moved.r[jdx], _ = _flow_pair(
            moved.p[idx], moved.r[jdx], s, potential, substeps
        )
        return f(moved)

    def d1(kind, i):
        return (
            along(kind, i, -2 * h)
            - 8.0 * along(kind, i, -h)
            + 8.0 * along(kind, i, h)
            - along(kind, i, 2 * h)
        ) / (12.0 * h)

    def d2(kind, i):
        return (
            -along(kind, i, 2 * h)
            + 16.0 * along(kind, i, h)
            - 30.0 * f(state)
            + 16.0 * along(kind, i, -h)
            - along(kind, i, -2 * h)
        ) / (12.0 * h * h)

    wset = set(window)
    site_idx = window
    bond_idx = sorted({(i - 1) % state.n for i in wset} | wset) if state.n > len(wset) \
        else list(range(state.n))
    # on a full ring every bond field touches the window exactly once
    if len(wset) == state.n:
        bond_idx = list(range(state.n))
        site_idx = list(range(state.n))

    drift = 0.0
    noise = 0.0
    for i in site_idx:
        drift += d1("site", i)
        noise += d2("site", i)
    for i in bond_idx:
        drift -= d1("bond", i)
        noise += d2("bond", i)
    val = drift + 0.5 * gamma * noise
    if not math.isfinite(val):
        raise FloatingPointError("generator evaluation produced a non-finite value")
    return val
