"""Interaction potentials and single-bond thermodynamics.

The chain couples neighbours through a smooth, symmetric, uniformly convex
potential V with V(0) = 0 and 0 < delta_minus <= V'' <= delta_plus.  All
equilibrium expectations of a single bond reduce to one-dimensional
integrals against exp(-beta*V(r)), which we evaluate by adaptive
quadrature on a rigorously truncated interval (V >= delta_minus*r^2/2
gives a Gaussian tail bound).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

# Convexity-ratio threshold for the technical spectral-gap assumption.
CONVEXITY_RATIO_THRESHOLD = (3.0 / 4.0) ** (1.0 / 16.0)

# exp(-TAIL_EXPONENT) < 1e-16 fixes the quadrature truncation radius.
_TAIL_EXPONENT = 16.0 * math.log(10.0)

_QUAD_EPSABS = 1e-13
_QUAD_EPSREL = 1e-12


class PotentialError(ValueError):
    """Raised for potentials outside the supported class."""


class QuadratureError(RuntimeError):
    """Raised when a thermodynamic integral fails to converge."""


def _logcosh(r):
    # log(cosh(r)) without overflow for large |r|
    a = np.abs(r)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


@dataclass(frozen=True)
class Potential:
    """A bond potential together with its convexity data.

    ``v``, ``dv`` and ``d2v`` accept scalars or numpy arrays.  ``family``
    is ``"harmonic"``, ``"log-cosh"`` or ``"custom"``; ``family_code`` is
    the integer tag used by the compiled simulation kernels (-1 means no
    fast path).
    """

    family: str
    v: Callable
    dv: Callable
    d2v: Callable
    delta_minus: float
    delta_plus: float
    satisfies_iii: bool
    family_code: int = -1
    epsilon: float = 0.0
    unsupported_assumptions: bool = False

    def label(self) -> str:
        if self.family == "log-cosh":
            return f"log-cosh({self.epsilon:g})"
        return self.family


def _check_bounds_on_grid(pot_d2v, delta_minus, delta_plus, tol=1e-9):
    grid = np.linspace(-10.0, 10.0, 1001)
    vals = np.asarray(pot_d2v(grid), dtype=float)
    if not np.all(np.isfinite(vals)):
        return False
    return bool(np.all(vals >= delta_minus - tol) and np.all(vals <= delta_plus + tol))


def make_potential(
    family: str,
    epsilon: float = 0.0,
    v: Callable | None = None,
    dv: Callable | None = None,
    d2v: Callable | None = None,
    delta_minus: float | None = None,
    delta_plus: float | None = None,
    allow_unsupported: bool = False,
) -> Potential:
    """Build a :class:`Potential` for one of the supported families.

    ``harmonic`` is r^2/2.  ``log-cosh`` is r^2/2 + epsilon*log(cosh r)
    with epsilon >= 0, so V'' = 1 + epsilon/cosh^2(r) stays in
    [1, 1+epsilon].  ``custom`` takes explicit callables plus claimed
    convexity bounds, which are verified on a grid; violations of the
    uniform-convexity assumption are rejected unless
    ``allow_unsupported=True`` (such potentials carry no correctness
    guarantees).

    The technical ratio condition delta_minus/delta_plus > (3/4)^(1/16)
    is only *flagged* via ``satisfies_iii``; construction never fails
    because of it.
    """
    if family == "harmonic":
        return Potential(
            family="harmonic",
            v=lambda r: 0.5 * np.square(r),
            dv=lambda r: np.asarray(r, dtype=float) + 0.0,
            d2v=lambda r: np.ones_like(np.asarray(r, dtype=float)),
            delta_minus=1.0,
            delta_plus=1.0,
            satisfies_iii=True,
            family_code=0,
        )
    if family in ("log-cosh", "logcosh"):
        if epsilon < 0:
            raise PotentialError("log-cosh requires epsilon >= 0")
        eps = float(epsilon)
        dminus, dplus = 1.0, 1.0 + eps
        return Potential(
            family="log-cosh",
            v=lambda r: 0.5 * np.square(r) + eps * _logcosh(r),
            dv=lambda r: np.asarray(r, dtype=float) + eps * np.tanh(r),
            d2v=lambda r: 1.0 + eps / np.square(np.cosh(r)),
            delta_minus=dminus,
            delta_plus=dplus,
            satisfies_iii=bool(dminus / dplus > CONVEXITY_RATIO_THRESHOLD),
            family_code=1,
            epsilon=eps,
        )
    if family == "custom":
        if v is None or dv is None or d2v is None:
            raise PotentialError("custom potential needs v, dv and d2v callables")
        if delta_minus is None or delta_plus is None:
            raise PotentialError("custom potential needs delta_minus and delta_plus")
        if not (0.0 < delta_minus <= delta_plus < math.inf):
            raise PotentialError(
                "uniform convexity (assumption (ii)) requires "
                "0 < delta_minus <= delta_plus < inf"
            )
        ok = _check_bounds_on_grid(d2v, delta_minus, delta_plus)
        if not ok and not allow_unsupported:
            raise PotentialError(
                "second derivative leaves [delta_minus, delta_plus] on the test "
                "grid, violating the uniform convexity assumption (ii); pass "
                "allow_unsupported=True to construct it anyway (no guarantees)"
            )
        return Potential(
            family="custom",
            v=v,
            dv=dv,
            d2v=d2v,
            delta_minus=float(delta_minus),
            delta_plus=float(delta_plus),
            satisfies_iii=bool(delta_minus / delta_plus > CONVEXITY_RATIO_THRESHOLD),
            family_code=-1,
            unsupported_assumptions=not ok,
        )
    raise PotentialError(f"unknown potential family: {family!r}")


@dataclass(frozen=True)
class ThermoSummary:
    """Single-bond equilibrium quantities at inverse temperature beta.

    ``chi`` is the variance of the site energy computed from quadrature
    moments; ``chi_from_derivative`` recomputes it as
    1/(2 beta^2) - d<V>/dbeta by a 5-point central difference, which the
    two-route invariant requires to agree to 1e-8 relative.
    """

    beta: float
    z: float                  # single-bond partition function
    mean_v: float             # <V(r)>
    mean_energy: float        # 1/(2 beta) + <V(r)>
    chi: float                # variance of site energy
    chi_from_derivative: float
    mean_d2v: float           # <V''(r)>
    mean_r2: float            # <r^2>
    mean_dv2: float           # <V'(r)^2>
    mean_dv_r: float          # <V'(r) r>, equals 1/beta by parts
    mean_v2: float = 0.0      # <V(r)^2>

    CSV_FIELDS = (
        "beta z mean_v mean_energy chi chi_from_derivative "
        "mean_d2v mean_r2 mean_dv2 mean_dv_r mean_v2"
    ).split()

    def csv_row(self) -> list[float]:
        return [getattr(self, name) for name in self.CSV_FIELDS]


def truncation_radius(potential: Potential, beta: float) -> float:
    """Half-width of the quadrature interval; the discarded tail of
    exp(-beta V) is below 1e-16 of the central value."""
    return math.sqrt(2.0 * _TAIL_EXPONENT / (beta * potential.delta_minus))


def bond_average(potential: Potential, beta: float, f: Callable) -> float:
    """<f(r)> under the single-bond measure exp(-beta V(r)) dr / Z."""
    z = _partition(potential, beta)
    return _integrate(potential, beta, f) / z


def _integrate(potential: Potential, beta: float, f: Callable | None) -> float:
    r_max = truncation_radius(potential, beta)
    if f is None:
        integrand = lambda r: math.exp(-beta * float(potential.v(r)))
    else:
        integrand = lambda r: float(f(r)) * math.exp(-beta * float(potential.v(r)))
    val, err = quad(
        integrand, -r_max, r_max, epsabs=_QUAD_EPSABS, epsrel=_QUAD_EPSREL, limit=200
    )
    if not math.isfinite(val) or err > max(_QUAD_EPSABS * 10.0, 1e-9 * abs(val)):
        raise QuadratureError(
            f"quadrature did not converge on [-{r_max:g}, {r_max:g}]: "
            f"value={val!r}, err={err!r}"
        )
    return val


def _partition(potential: Potential, beta: float) -> float:
    return _integrate(potential, beta, None)


def _mean_v(potential: Potential, beta: float) -> float:
    return _integrate(potential, beta, potential.v) / _partition(potential, beta)


def thermo(potential: Potential, beta: float) -> ThermoSummary:
    """All single-bond thermodynamic quantities at inverse temperature beta."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    z = _partition(potential, beta)
    mean = lambda f: _integrate(potential, beta, f) / z
    v, dv, d2v = potential.v, potential.dv, potential.d2v
    mean_v = mean(v)
    mean_v2 = mean(lambda r: float(v(r)) ** 2)
    mean_d2v = mean(d2v)
    mean_r2 = mean(lambda r: r * r)
    mean_dv2 = mean(lambda r: float(dv(r)) ** 2)
    mean_dv_r = mean(lambda r: float(dv(r)) * r)
    # chi route 1: energy variance; kinetic and potential parts are independent
    chi = 1.0 / (2.0 * beta * beta) + (mean_v2 - mean_v * mean_v)
    # chi route 2: 1/(2 beta^2) - d<V>/dbeta, 5-point central difference
    h = 1e-4 * beta
    stencil = (
        _mean_v(potential, beta - 2 * h)
        - 8.0 * _mean_v(potential, beta - h)
        + 8.0 * _mean_v(potential, beta + h)
        - _mean_v(potential, beta + 2 * h)
    ) / (12.0 * h)
    chi_deriv = 1.0 / (2.0 * beta * beta) - stencil
    return ThermoSummary(
        beta=beta,
        z=z,
        mean_v=mean_v,
        mean_energy=1.0 / (2.0 * beta) + mean_v,
        chi=chi,
        chi_from_derivative=chi_deriv,
        mean_d2v=mean_d2v,
        mean_r2=mean_r2,
        mean_dv2=mean_dv2,
        mean_dv_r=mean_dv_r,
        mean_v2=mean_v2,
    )


def invert_on_halfline(potential: Potential, targets: np.ndarray) -> np.ndarray:
    """Solve V(x) = target for x >= 0, elementwise.

    V is strictly convex with V(0) = 0, so on the half line the solution
    is unique and bracketed by sqrt(2*target/delta_plus) <=
    x <= sqrt(2*target/delta_minus).  Safeguarded Newton from the upper
    bracket end; raises :class:`QuadratureError` on non-convergence.
    """
    t = np.asarray(targets, dtype=float)
    if np.any(t < 0):
        raise ValueError("targets must be nonnegative")
    lo = np.sqrt(2.0 * t / potential.delta_plus)
    hi = np.sqrt(2.0 * t / potential.delta_minus)
    x = hi.copy()
    tol = 1e-15 * (1.0 + t)
    for _ in range(100):
        f = np.asarray(potential.v(x), dtype=float) - t
        if np.all(np.abs(f) <= tol):
            break
        fp = np.asarray(potential.dv(x), dtype=float)
        step = np.divide(f, fp, out=np.zeros_like(f), where=fp != 0)
        x = np.clip(x - step, lo, hi)
    else:
        raise QuadratureError("potential inversion did not converge")
    return x


def mean_energy(potential: Potential, beta: float) -> float:
    """Equilibrium site energy 1/(2 beta) + <V(r)> (strictly decreasing in beta)."""
    return 1.0 / (2.0 * beta) + _mean_v(potential, beta)


def beta_of_energy(potential: Potential, energy: float) -> float:
    """Invert the mean site energy: the beta with mean_energy(beta) = energy.

    Bracketed root finding; the map is strictly decreasing so a geometric
    bracket expansion always succeeds.
    """
    if energy <= 0:
        raise ValueError("energy must be positive")
    # harmonic-like initial guess: mean energy ~ 1/beta
    lo = hi = max(1.0 / energy, 1e-8)
    for _ in range(200):
        if mean_energy(potential, lo) > energy:
            break
        lo *= 0.5
    for _ in range(200):
        if mean_energy(potential, hi) < energy:
            break
        hi *= 2.0
    f = lambda b: mean_energy(potential, b) - energy
    beta = brentq(f, lo, hi, xtol=1e-15, rtol=8.9e-16, maxiter=200)
    if abs(mean_energy(potential, beta) - energy) > 1e-10 * max(1.0, energy):
        raise QuadratureError("energy inversion did not reach tolerance")
    return float(beta)
