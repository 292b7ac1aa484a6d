"""Galerkin solver for the conductivity saddle-point formula.

The conductivity-like coefficient admits an inf/sup characterisation
over local functions split by momentum parity: an even trial function
enters two quadratic "dissipation" terms built from the fields applied
to its infinite shift-sum, and an odd trial function enters linearly
against the drift residual and quadratically through its own dissipation.
Restricted to polynomial trial spaces on a finite window everything
reduces to dense linear algebra with Gram matrices of product-measure
moments, which factorise site by site.

All expectations are exact sums of per-site moments; the moments come
from closed-form Gaussian values in the harmonic case and adaptive
quadrature otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from . import symbolic as sym
from .potential import Potential, bond_average
from .symbolic import LocalPolynomial

_MAX_P_POWER = 8
_MAX_R_TOTAL = 6


class MomentRangeError(ValueError):
    """A polynomial letter fell outside the tabulated moment range."""


def _double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


@dataclass
class MomentTable:
    """Per-site moments of the product equilibrium measure.

    ``mu(a)`` is the a-th momentum moment.  ``r_moment(b, c, d)`` is the
    mixed stretch moment <r^b V'(r)^c V''(r)^d>; ``nu(b, c, d)`` exposes
    the same numbers with the (V'-power, r-power, V''-power) argument
    order.  Odd-parity entries vanish identically by the symmetry of V
    and are stored as exact zeros.
    """

    beta: float
    potential: Potential
    p_moments: np.ndarray = field(repr=False, default=None)
    r_moments: dict = field(repr=False, default_factory=dict)

    def mu(self, a: int) -> float:
        if not 0 <= a <= _MAX_P_POWER:
            raise MomentRangeError(f"momentum power {a} outside table (max {_MAX_P_POWER})")
        return float(self.p_moments[a])

    def r_moment(self, b: int, c: int, d: int) -> float:
        if min(b, c, d) < 0 or b + c + d > _MAX_R_TOTAL:
            raise MomentRangeError(
                f"stretch letters (r^{b} vp^{c} vpp^{d}) outside table "
                f"(total max {_MAX_R_TOTAL})"
            )
        return self.r_moments[(b, c, d)]

    def nu(self, b: int, c: int, d: int) -> float:
        """<V'(r)^b r^c V''(r)^d>."""
        return self.r_moment(c, b, d)


def build_moment_table(potential: Potential, beta: float) -> MomentTable:
    """Tabulate all per-site moments needed by degree-limited polynomials."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    p_moments = np.zeros(_MAX_P_POWER + 1)
    for a in range(0, _MAX_P_POWER + 1, 2):
        p_moments[a] = _double_factorial(a - 1) / beta ** (a // 2)
    table = MomentTable(beta=beta, potential=potential, p_moments=p_moments)
    harmonic = potential.family_code == 0
    for b in range(_MAX_R_TOTAL + 1):
        for c in range(_MAX_R_TOTAL + 1 - b):
            for d in range(_MAX_R_TOTAL + 1 - b - c):
                if (b + c) % 2 == 1:
                    # integrand odd: r and V' are odd, V'' even
                    table.r_moments[(b, c, d)] = 0.0
                elif harmonic:
                    # V' = r and V'' = 1 exactly
                    table.r_moments[(b, c, d)] = _double_factorial(b + c - 1) / beta ** (
                        (b + c) // 2
                    )
                else:
                    table.r_moments[(b, c, d)] = bond_average(
                        potential,
                        beta,
                        lambda rr, b=b, c=c, d=d: rr**b
                        * float(potential.dv(rr)) ** c
                        * float(potential.d2v(rr)) ** d,
                    )
    return table


def expect(f: LocalPolynomial, table: MomentTable) -> float:
    """Product-measure expectation of a local polynomial: every monomial
    factorises into per-site moments."""
    total = 0.0
    for mono, coeff in f.terms.items():
        val = float(coeff)
        for _site, (a, b, c, d) in mono:
            val *= table.mu(a) * table.r_moment(b, c, d)
            if val == 0.0:
                break
        total += val
    return total


def expect_with_shift_sum(h: LocalPolynomial, g: LocalPolynomial,
                          table: MomentTable) -> float:
    """Sum over j of <h * shift(g, j)>.

    Finite because both factors are local with zero mean: terms with
    disjoint windows factorise into a product of means and vanish.  The
    caller is responsible for h and g being mean zero.
    """
    hw, gw = h.window(), g.window()
    if hw is None or gw is None:
        return 0.0
    total = 0.0
    for j in range(hw[0] - gw[1], hw[1] - gw[0] + 1):
        total += expect(h * g.shift(j), table)
    return total


# -- fields applied to shift sums ---------------------------------------------


def field_of_shift_sum(f: LocalPolynomial, kind: str) -> LocalPolynomial:
    """Apply the site field at 0 (kind="site") or the bond field across
    (0, 1) (kind="bond") to the formal shift-sum of f.

    Only finitely many shifts contribute: the field kills every
    translate whose window misses its anchor sites.
    """
    win = f.window()
    if win is None:
        return LocalPolynomial.zero(f.mode)
    lo, hi = win
    out = LocalPolynomial.zero(f.mode)
    anchor_hi = 0 if kind == "site" else 1
    for j in range(-hi + 0, -lo + anchor_hi + 1):
        term = sym.vf_apply(f.shift(j), kind, 0)
        out = out + term
    return out


# -- trial bases ----------------------------------------------------------------


def monomial_basis(window_k: int, degree: int, parity: int) -> list[LocalPolynomial]:
    """Shift-inequivalent monomials in the plain (p, r) letters.

    Support width at most 2*window_k (so each fits a centred window of
    radius window_k after shifting), total degree <= degree, leftmost
    occupied site 0, and total momentum degree of the given parity.
    Constants are excluded.
    """
    if window_k < 0 or degree < 1:
        raise ValueError("need window_k >= 0 and degree >= 1")
    sites = range(0, 2 * window_k + 1)
    variables = [("p", s) for s in sites] + [("r", s) for s in sites]
    seen = set()
    basis = []
    for deg in range(1, degree + 1):
        for combo in combinations_with_replacement(variables, deg):
            occupied = [s for _, s in combo]
            if min(occupied) != 0:
                continue
            p_degree = sum(1 for kind, _ in combo if kind == "p")
            if p_degree % 2 != parity:
                continue
            key = tuple(sorted(combo))
            if key in seen:
                continue
            seen.add(key)
            poly = sym.const(1)
            for kind, s in combo:
                poly = poly * (sym.p(s) if kind == "p" else sym.r(s))
            basis.append(poly)
    return basis


def _centered(basis: list[LocalPolynomial], table: MomentTable) -> list[LocalPolynomial]:
    return [b - sym.const(expect(b, table)) for b in basis]


# -- saddle solve -----------------------------------------------------------------


@dataclass
class SaddleSolution:
    kappa_hat: float
    f_coeffs: np.ndarray
    g_coeffs: np.ndarray
    window_k: int
    degree: int
    f_basis: list[LocalPolynomial]
    g_basis: list[LocalPolynomial]
    diagnostics: dict

    def optimal_f(self) -> LocalPolynomial:
        out = LocalPolynomial.zero("general")
        for c, b in zip(self.f_coeffs, self.f_basis):
            out = out + float(c) * b
        return out

    def optimal_g(self) -> LocalPolynomial:
        out = LocalPolynomial.zero("general")
        for c, b in zip(self.g_coeffs, self.g_basis):
            out = out + float(c) * b
        return out


def _gram(polys: list[LocalPolynomial], table: MomentTable) -> np.ndarray:
    n = len(polys)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            out[i, j] = out[j, i] = expect(polys[i] * polys[j], table)
    return out


def solve_saddle(
    potential: Potential,
    beta: float,
    gamma: float,
    window_k: int = 1,
    degree: int = 2,
    f_basis: list[LocalPolynomial] | None = None,
    g_basis: list[LocalPolynomial] | None = None,
    table: MomentTable | None = None,
) -> SaddleSolution:
    """Solve the inf/sup conductivity formula on polynomial trial spaces.

    The inner sup over the odd function is a concave quadratic,
    eliminated through its normal equations (pseudo-inverse of its
    positive semidefinite Gram block); the remaining convex quadratic in
    the even coefficients is minimised by a linear solve.  Returns the
    Galerkin value beta^2 * (optimal functional), which upper-bounds the
    outcome of enlarging the even space while the odd space is kept.

    ``f_basis``/``g_basis`` override the default monomial bases (used for
    restricted-space studies); parity is enforced on both.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if degree > 4:
        raise ValueError("degree too large for the tabulated moments")
    if table is None:
        table = build_moment_table(potential, beta)
    if f_basis is None:
        f_basis = monomial_basis(window_k, degree, parity=0)
    if g_basis is None:
        g_basis = monomial_basis(window_k, degree, parity=1)
    for b in f_basis:
        if b.p_parity() != 0:
            raise ValueError(f"even trial function has odd momentum degree: {b!r}")
    for b in g_basis:
        if b.p_parity() != 1:
            raise ValueError(f"odd trial function has even momentum degree: {b!r}")
    f_basis = _centered(f_basis, table)
    g_basis = list(g_basis)

    w_pol = sym.p(0) * sym.vp(1)  # the current's stochastic coupling term
    drift_current = sym.bond_current_drift(0)

    a_f = [field_of_shift_sum(b, "site") for b in f_basis]
    b_f = [field_of_shift_sum(b, "bond") for b in f_basis]
    c_g = [field_of_shift_sum(b, "site") for b in g_basis]
    d_g = [field_of_shift_sum(b, "bond") for b in g_basis]

    nf, ng = len(f_basis), len(g_basis)
    k_f = _gram(a_f, table) + _gram(b_f, table)
    h_f = np.array([expect(w_pol * b_f[m], table) for m in range(nf)])
    const_f = expect(w_pol * w_pol, table)
    s_g = 0.5 * gamma * (_gram(c_g, table) + _gram(d_g, table))
    r_g = np.array(
        [expect_with_shift_sum(drift_current, g_basis[n], table) for n in range(ng)]
    )
    drift_f = [sym.apply_hamiltonian_generator(b) for b in f_basis]
    m_cross = np.zeros((ng, nf))
    for n in range(ng):
        for m in range(nf):
            m_cross[n, m] = expect_with_shift_sum(drift_f[m], g_basis[n], table)

    # eliminate the odd block: sup_v { 2 v.(r - M u) - v.S v } = (r-Mu).P.(r-Mu)
    p_g = np.linalg.pinv(s_g, rcond=1e-12, hermitian=True)
    lhs = gamma * k_f + 2.0 * m_cross.T @ p_g @ m_cross
    rhs = gamma * h_f + 2.0 * m_cross.T @ p_g @ r_g
    ridge_used = False
    try:
        u = np.linalg.solve(lhs, rhs)
        if not np.all(np.isfinite(u)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        ridge_used = True
        u = np.linalg.solve(lhs + 1e-12 * np.eye(nf), rhs)
    v = p_g @ (r_g - m_cross @ u)

    t1 = 0.5 * gamma * (const_f - 2.0 * h_f @ u + u @ k_f @ u)
    value = t1 + 2.0 * v @ (r_g - m_cross @ u) - v @ s_g @ v
    kappa = beta * beta * value

    diagnostics = {
        "ridge_used": ridge_used,
        "cond_f_block": float(np.linalg.cond(lhs)) if nf else 0.0,
        "cond_g_block": float(np.linalg.cond(s_g)) if ng else 0.0,
        "n_even": nf,
        "n_odd": ng,
    }
    return SaddleSolution(
        kappa_hat=float(kappa),
        f_coeffs=u,
        g_coeffs=v,
        window_k=window_k,
        degree=degree,
        f_basis=f_basis,
        g_basis=g_basis,
        diagnostics=diagnostics,
    )


def saddle_value_at(
    potential: Potential,
    beta: float,
    gamma: float,
    f_poly: LocalPolynomial,
    g_basis: list[LocalPolynomial],
    table: MomentTable | None = None,
) -> float:
    """Inner sup of the conductivity functional at one fixed even trial
    function (no outer minimisation).  Monotone non-decreasing in the odd
    trial space, and an upper bound for the full Galerkin value over any
    even space containing ``f_poly``."""
    if f_poly.p_parity() != 0:
        raise ValueError("fixed trial function must be even in momenta")
    if table is None:
        table = build_moment_table(potential, beta)
    w_pol = sym.p(0) * sym.vp(1)
    drift_current = sym.bond_current_drift(0)
    a1 = field_of_shift_sum(f_poly, "site")
    b1 = field_of_shift_sum(f_poly, "bond")
    resid = w_pol - b1
    t1 = 0.5 * gamma * (expect(resid * resid, table) + expect(a1 * a1, table))
    c_g = [field_of_shift_sum(b, "site") for b in g_basis]
    d_g = [field_of_shift_sum(b, "bond") for b in g_basis]
    s_g = 0.5 * gamma * (_gram(c_g, table) + _gram(d_g, table))
    drift_f = sym.apply_hamiltonian_generator(f_poly)
    r_g = np.array(
        [
            expect_with_shift_sum(drift_current - drift_f, b, table)
            for b in g_basis
        ]
    )
    p_g = np.linalg.pinv(s_g, rcond=1e-12, hermitian=True)
    return float(beta * beta * (t1 + r_g @ p_g @ r_g))


def certify_monotone(
    potential: Potential,
    beta: float,
    gamma: float,
    windows: list[int],
    degree: int = 2,
    slack: float = 1e-10,
) -> list[tuple[int, float]]:
    """Galerkin values over nested even trial spaces.

    The odd space is held at the largest window for every row, so the
    sequence is an inf of one fixed functional over growing sets and
    must be non-increasing; a violation indicates an assembly bug.
    """
    if len(windows) < 2:
        raise ValueError("need at least two windows")
    windows = sorted(windows)
    table = build_moment_table(potential, beta)
    g_basis = monomial_basis(max(windows), degree, parity=1)
    rows = []
    for k in windows:
        sol = solve_saddle(
            potential, beta, gamma, window_k=k, degree=degree,
            f_basis=monomial_basis(k, degree, parity=0),
            g_basis=g_basis, table=table,
        )
        rows.append((k, sol.kappa_hat))
    for (_, a), (_, b) in zip(rows, rows[1:]):
        if b > a + slack:
            raise AssertionError(
                f"Galerkin value increased along nested spaces: {a!r} -> {b!r}"
            )
    return rows
