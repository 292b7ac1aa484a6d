"""Equilibrium sampling: product measure and constant-energy shell.

``sample_gibbs`` draws exact product-measure states (Gaussian momenta,
rejection-sampled stretches against the Gaussian envelope that the
uniform convexity bound provides).  ``sample_microcanonical`` combines an
exact per-site energy rescaling, done in energy/angle coordinates, with
energy-conserving noise sweeps that mix on the shell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .potential import Potential, beta_of_energy, invert_on_halfline
from .rng import RngStream


@dataclass
class ChainState:
    """Phase point of the ring: momenta p and stretches r, one per site."""

    p: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        if self.p.shape != self.r.shape or self.p.ndim != 1:
            raise ValueError("p and r must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.r))):
            raise ValueError("state entries must be finite")

    @property
    def n(self) -> int:
        return self.p.shape[0]

    def copy(self) -> "ChainState":
        return ChainState(self.p.copy(), self.r.copy())

    def total_energy(self, potential: Potential) -> float:
        return float(np.sum(0.5 * self.p**2 + potential.v(self.r)))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or numpy Generator")


def sample_stretches(
    potential: Potential, beta: float, n: int, g: np.random.Generator
) -> np.ndarray:
    """n i.i.d. draws with density exp(-beta V(r)) / Z.

    Rejection against the Gaussian envelope exp(-beta delta_minus r^2/2):
    since V(r) >= delta_minus r^2/2 the acceptance ratio
    exp(-beta (V - delta_minus r^2/2)) never exceeds one.
    """
    out = np.empty(n)
    filled = 0
    scale = 1.0 / math.sqrt(beta * potential.delta_minus)
    while filled < n:
        need = n - filled
        batch = max(256, need + need // 4)
        prop = g.standard_normal(batch) * scale
        log_acc = -beta * (
            np.asarray(potential.v(prop), dtype=float)
            - 0.5 * potential.delta_minus * prop**2
        )
        keep = prop[g.random(batch) < np.exp(log_acc)]
        take = min(keep.shape[0], need)
        out[filled : filled + take] = keep[:take]
        filled += take
    return out


def sample_gibbs(potential: Potential, beta: float, n: int, rng) -> ChainState:
    """Draw one equilibrium state: p_i ~ N(0, 1/beta) and r_i from the
    bond measure, all independent."""
    if n < 2:
        raise ValueError("need at least two sites")
    if beta <= 0:
        raise ValueError("beta must be positive")
    g = _as_generator(rng)
    p = g.standard_normal(n) / math.sqrt(beta)
    r = sample_stretches(potential, beta, n, g)
    return ChainState(p, r)


def energy_angle(state: ChainState, potential: Potential):
    """Per-site energy/angle coordinates (e, theta) with
    sqrt(e) cos(theta) = p/sqrt(2) and sqrt(e) sin(theta) = sgn(r) sqrt(V(r))."""
    e = 0.5 * state.p**2 + np.asarray(potential.v(state.r), dtype=float)
    theta = np.arctan2(
        np.sign(state.r) * np.sqrt(np.asarray(potential.v(state.r), dtype=float)),
        state.p / math.sqrt(2.0),
    )
    return e, theta


def from_energy_angle(e: np.ndarray, theta: np.ndarray, potential: Potential) -> ChainState:
    """Inverse of :func:`energy_angle`; the stretch solves
    V(r) = e sin(theta)^2 with the sign of sin(theta)."""
    p = np.sqrt(2.0 * e) * np.cos(theta)
    s = np.sin(theta)
    r = invert_on_halfline(potential, e * s**2) * np.sign(s)
    return ChainState(p, r)


def project_to_energy_shell(
    state: ChainState, potential: Potential, total_energy: float
) -> ChainState:
    """Rescale every site energy by a common factor so the total is exact.

    Works in (e, theta) coordinates: multiplies each e_i by
    total/sum(e_j) and maps back, leaving every angle unchanged.
    Idempotent by construction.
    """
    e, theta = energy_angle(state, potential)
    tot = float(np.sum(e))
    if tot <= 0:
        raise ValueError("cannot rescale a zero-energy state")
    return from_energy_angle(e * (total_energy / tot), theta, potential)


def sample_microcanonical(
    potential: Potential,
    n: int,
    energy: float,
    rng,
    mixing_sweeps: int = 1000,
    gamma_mix: float = 1.0,
    dt_mix: float = 1.0,
) -> ChainState:
    """Approximate draw from the constant-energy shell sum(E_i) = n*energy.

    Three stages: (1) draw from the product measure at the matching
    temperature, (2) rescale onto the shell exactly, (3) run
    energy-conserving noise sweeps (which leave the shell invariant and
    are ergodic on it) to mix away the rescaling distortion.
    """
    if energy <= 0:
        raise ValueError("energy must be positive")
    from .dynamics import noise_sweep  # local import: dynamics depends on this module

    g = _as_generator(rng)
    beta = beta_of_energy(potential, energy)
    state = sample_gibbs(potential, beta, n, g)
    state = project_to_energy_shell(state, potential, n * energy)
    for _ in range(mixing_sweeps):
        state = noise_sweep(state, dt_mix, gamma_mix, g, potential)
    return state


# -- snapshots ----------------------------------------------------------------


def save_state(state: ChainState, path) -> None:
    """Write a state snapshot; .csv gives text (n, then p row, then r row),
    anything else a flat little-endian binary with the same layout."""
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, "w") as fh:
            fh.write(f"{state.n}\n")
            fh.write(",".join(f"{x:.17g}" for x in state.p) + "\n")
            fh.write(",".join(f"{x:.17g}" for x in state.r) + "\n")
    else:
        with open(path, "wb") as fh:
            np.asarray([state.n], dtype="<i8").tofile(fh)
            state.p.astype("<f8").tofile(fh)
            state.r.astype("<f8").tofile(fh)


def load_state(path) -> ChainState:
    path = Path(path)
    if path.suffix == ".csv":
        with open(path) as fh:
            n = int(fh.readline())
            p = np.array([float(x) for x in fh.readline().split(",")])
            r = np.array([float(x) for x in fh.readline().split(",")])
    else:
        raw = np.fromfile(path, dtype="<f8")
        n = int(np.frombuffer(raw[:1].tobytes(), dtype="<i8")[0])
        p = raw[1 : 1 + n].copy()
        r = raw[1 + n : 1 + 2 * n].copy()
    if p.shape[0] != n or r.shape[0] != n:
        raise ValueError(f"snapshot at {path} is truncated")
    return ChainState(p, r)
