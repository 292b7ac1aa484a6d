"""Exact sparse polynomial algebra for local functions of the chain.

A local function is a polynomial in the per-site letters

    p[i]   momentum at site i,
    r[i]   stretch at site i,
    vp[i]  V'(r_i),
    vpp[i] V''(r_i),

with rational (or float) coefficients and finite support.  The module
applies lattice shifts, the two first-order fields of the dynamics (the
single-site rotation field and the bond coupling field), the full drift
and noise generators built from them, and the forward lattice
difference.  In ``harmonic`` mode the letters are normalised via
vp -> r and vpp -> 1, so every computation there is exact rational
arithmetic; in ``general`` mode differentiating a vpp letter would
require V''' and raises :class:`AlphabetOverflowError`.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Mapping

__all__ = [
    "AlphabetOverflowError",
    "LocalPolynomial",
    "p",
    "r",
    "vp",
    "vpp",
    "const",
    "site_energy",
    "bond_current_drift",
    "bond_current_noise",
    "vf_apply",
    "apply_hamiltonian_generator",
    "apply_noise_generator",
    "apply_generator",
    "forward_difference",
    "harmonic_fd_residual",
    "harmonic_fd_gradient_part",
    "harmonic_fd_generator_part",
]

# per-site exponent tuple indices
_P, _R, _VP, _VPP = 0, 1, 2, 3

_ZERO_EXP = (0, 0, 0, 0)


class AlphabetOverflowError(ValueError):
    """Differentiation left the (p, r, V', V'') letter alphabet."""


def _coerce(c):
    if isinstance(c, Fraction):
        return c
    if isinstance(c, int):
        return Fraction(c)
    return float(c)


def _norm_monomial(mono: Iterable) -> tuple:
    items = tuple(sorted((int(s), tuple(e)) for s, e in mono if tuple(e) != _ZERO_EXP))
    return items


class LocalPolynomial:
    """Sparse polynomial over per-site letters with a finite window.

    Monomials are stored as sorted tuples of (site, (a, b, c, d)) where
    the exponents are the powers of p, r, vp, vpp at that site.
    Immutable value semantics: every operation returns a new polynomial.
    """

    __slots__ = ("terms", "mode")

    def __init__(self, terms: Mapping | None = None, mode: str = "general"):
        if mode not in ("harmonic", "general"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        clean: dict = {}
        if terms:
            for mono, coeff in terms.items():
                coeff = _coerce(coeff)
                if coeff == 0:
                    continue
                mono = _norm_monomial(mono)
                if mode == "harmonic":
                    mono = _harmonic_normalize(mono)
                clean[mono] = clean.get(mono, Fraction(0)) + coeff
                if clean[mono] == 0:
                    del clean[mono]
        self.terms = clean

    # -- construction -------------------------------------------------

    @classmethod
    def zero(cls, mode: str = "general") -> "LocalPolynomial":
        return cls({}, mode)

    @classmethod
    def constant(cls, value, mode: str = "general") -> "LocalPolynomial":
        return cls({(): value}, mode)

    @classmethod
    def letter(cls, which: int, site: int, mode: str = "general") -> "LocalPolynomial":
        exp = [0, 0, 0, 0]
        exp[which] = 1
        return cls({((site, tuple(exp)),): 1}, mode)

    # -- basic queries -------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def window(self) -> tuple[int, int] | None:
        """Smallest site interval containing the support, or None."""
        sites = [s for mono in self.terms for s, _ in mono]
        if not sites:
            return None
        return min(sites), max(sites)

    def p_parity(self) -> int | None:
        """0 if every monomial has even total p-degree, 1 if odd, None if mixed."""
        parities = {sum(e[_P] for _, e in mono) % 2 for mono in self.terms}
        if not parities:
            return 0
        if len(parities) > 1:
            return None
        return parities.pop()

    def degree(self) -> int:
        return max(
            (sum(sum(e) for _, e in mono) for mono in self.terms), default=0
        )

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        other = self._as_poly(other)
        out = dict(self.terms)
        for mono, c in other.terms.items():
            out[mono] = out.get(mono, Fraction(0)) + c
        return LocalPolynomial(out, self.mode)

    def __radd__(self, other):
        return self.__add__(other)

    def __neg__(self):
        return LocalPolynomial({m: -c for m, c in self.terms.items()}, self.mode)

    def __sub__(self, other):
        return self.__add__(self._as_poly(other).__neg__())

    def __rsub__(self, other):
        return self._as_poly(other).__sub__(self)

    def __mul__(self, other):
        if isinstance(other, LocalPolynomial):
            self._check_mode(other)
            out: dict = {}
            for m1, c1 in self.terms.items():
                for m2, c2 in other.terms.items():
                    mono = _merge_monomials(m1, m2)
                    c = c1 * c2
                    out[mono] = out.get(mono, Fraction(0)) + c
            return LocalPolynomial(out, self.mode)
        c = _coerce(other)
        return LocalPolynomial({m: c * v for m, v in self.terms.items()}, self.mode)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __eq__(self, other):
        if not isinstance(other, LocalPolynomial):
            return NotImplemented
        return self.mode == other.mode and (self - other).is_zero()

    def __hash__(self):
        return hash((self.mode, tuple(sorted(self.terms.items()))))

    # -- lattice operations ---------------------------------------------

    def shift(self, k: int) -> "LocalPolynomial":
        """Translate every site index by k; coefficients unchanged."""
        return LocalPolynomial(
            {
                tuple((s + k, e) for s, e in mono): c
                for mono, c in self.terms.items()
            },
            self.mode,
        )

    def canonical_shift(self) -> tuple["LocalPolynomial", int]:
        """Shift so the leftmost occupied site is 0; returns (poly, applied shift)."""
        win = self.window()
        if win is None:
            return self, 0
        return self.shift(-win[0]), -win[0]

    # -- printing --------------------------------------------------------

    def canonical(self) -> str:
        """Deterministic text form for golden-file comparisons."""
        if not self.terms:
            return "0"
        names = ("p", "r", "vp", "vpp")
        pieces = []
        for mono in sorted(self.terms):
            c = self.terms[mono]
            factors = []
            for site, exp in mono:
                for which, power in enumerate(exp):
                    if power:
                        s = f"{names[which]}[{site}]"
                        if power > 1:
                            s += f"^{power}"
                        factors.append(s)
            body = "*".join(factors) if factors else "1"
            pieces.append(f"({c})*{body}")
        return " + ".join(pieces)

    def __repr__(self):
        return f"LocalPolynomial<{self.mode}>({self.canonical()})"

    # -- helpers ----------------------------------------------------------

    def _as_poly(self, other):
        if isinstance(other, LocalPolynomial):
            self._check_mode(other)
            return other
        return LocalPolynomial.constant(other, self.mode)

    def _check_mode(self, other):
        if self.mode != other.mode:
            raise ValueError("cannot mix harmonic and general mode polynomials")


def _merge_monomials(m1, m2):
    sites: dict = {}
    for s, e in m1:
        sites[s] = list(e)
    for s, e in m2:
        if s in sites:
            sites[s] = [x + y for x, y in zip(sites[s], e)]
        else:
            sites[s] = list(e)
    return _norm_monomial((s, tuple(e)) for s, e in sites.items())


def _harmonic_normalize(mono):
    # vp -> r, vpp -> 1 at every site
    out = []
    for s, (a, b, c, d) in mono:
        out.append((s, (a, b + c, 0, 0)))
    return _norm_monomial(out)


# -- letter constructors ---------------------------------------------------


def p(site: int, mode: str = "general") -> LocalPolynomial:
    return LocalPolynomial.letter(_P, site, mode)


def r(site: int, mode: str = "general") -> LocalPolynomial:
    return LocalPolynomial.letter(_R, site, mode)


def vp(site: int, mode: str = "general") -> LocalPolynomial:
    """The letter V'(r_site)."""
    return LocalPolynomial.letter(_VP, site, mode)


def vpp(site: int, mode: str = "general") -> LocalPolynomial:
    """The letter V''(r_site)."""
    return LocalPolynomial.letter(_VPP, site, mode)


def const(value, mode: str = "general") -> LocalPolynomial:
    return LocalPolynomial.constant(value, mode)


def site_energy(site: int, mode: str = "harmonic") -> LocalPolynomial:
    """p_i^2/2 + V(r_i).  Only expressible in harmonic mode (V = r^2/2);
    the general alphabet has no letter for the potential value itself."""
    if mode != "harmonic":
        raise AlphabetOverflowError(
            "site energy needs the potential value V(r), which only the "
            "harmonic mode can express as r^2/2"
        )
    return Fraction(1, 2) * (p(site, mode) * p(site, mode) + r(site, mode) * r(site, mode))


def bond_current_drift(site: int, mode: str = "general") -> LocalPolynomial:
    """Hamiltonian part of the energy current across bond (site, site+1):
    -p_i V'(r_{i+1})."""
    return -(p(site, mode) * vp(site + 1, mode))


def bond_current_noise(site: int, gamma, mode: str = "general") -> LocalPolynomial:
    """Noise part of the energy current across bond (site, site+1):
    (gamma/2) (p_i^2 V''(r_{i+1}) - V'(r_{i+1})^2)."""
    g = _coerce(gamma)
    pi = p(site, mode)
    return (g / 2) * (
        pi * pi * vpp(site + 1, mode) - vp(site + 1, mode) * vp(site + 1, mode)
    )


# -- derivatives and vector fields ------------------------------------------


def _d_dp(f: LocalPolynomial, site: int) -> LocalPolynomial:
    out: dict = {}
    for mono, coeff in f.terms.items():
        for idx, (s, e) in enumerate(mono):
            if s == site and e[_P] > 0:
                new = list(mono)
                ne = list(e)
                ne[_P] -= 1
                new[idx] = (s, tuple(ne))
                key = _norm_monomial(new)
                out[key] = out.get(key, Fraction(0)) + coeff * e[_P]
    return LocalPolynomial(out, f.mode)


def _d_dr(f: LocalPolynomial, site: int) -> LocalPolynomial:
    out: dict = {}
    for mono, coeff in f.terms.items():
        for idx, (s, e) in enumerate(mono):
            if s != site:
                continue
            a, b, c, d = e
            if b > 0:
                new = list(mono)
                new[idx] = (s, (a, b - 1, c, d))
                key = _norm_monomial(new)
                out[key] = out.get(key, Fraction(0)) + coeff * b
            if c > 0:
                # d/dr vp^c = c vp^(c-1) vpp
                new = list(mono)
                new[idx] = (s, (a, b, c - 1, d + 1))
                key = _norm_monomial(new)
                if f.mode == "harmonic":
                    key = _harmonic_normalize(key)
                out[key] = out.get(key, Fraction(0)) + coeff * c
            if d > 0 and f.mode != "harmonic":
                raise AlphabetOverflowError(
                    f"d/dr of vpp[{site}] needs V''', which is outside the alphabet"
                )
    return LocalPolynomial(out, f.mode)


def _bond_field(f: LocalPolynomial, i: int, j: int) -> LocalPolynomial:
    """p_i d/dr_j - V'(r_j) d/dp_i applied to f."""
    mode = f.mode
    return p(i, mode) * _d_dr(f, j) - vp(j, mode) * _d_dp(f, i)


def vf_apply(f: LocalPolynomial, kind: str, site: int) -> LocalPolynomial:
    """Apply one first-order field of the dynamics to f.

    ``kind="site"`` is the single-oscillator rotation field at ``site``
    (couples p_i with r_i); ``kind="bond"`` couples p_site with
    r_{site+1}.  Exact product/chain rule; in general mode the chain rule
    on a vp letter introduces a vpp letter, and differentiating vpp
    raises :class:`AlphabetOverflowError`.
    """
    if kind == "site":
        return _bond_field(f, site, site)
    if kind == "bond":
        return _bond_field(f, site, site + 1)
    raise ValueError(f"unknown field kind {kind!r}")


def _field_index_range(f: LocalPolynomial) -> tuple[range, range]:
    win = f.window()
    if win is None:
        return range(0), range(0)
    lo, hi = win
    return range(lo, hi + 1), range(lo - 1, hi + 1)


def apply_hamiltonian_generator(f: LocalPolynomial) -> LocalPolynomial:
    """Drift generator: sum over i of (site field - bond field) applied to f.

    The sum is restricted to the finitely many fields that touch f's
    window; all other terms vanish identically.
    """
    site_range, bond_range = _field_index_range(f)
    out = LocalPolynomial.zero(f.mode)
    for i in site_range:
        out = out + vf_apply(f, "site", i)
    for i in bond_range:
        out = out - vf_apply(f, "bond", i)
    return out


def apply_noise_generator(f: LocalPolynomial, gamma) -> LocalPolynomial:
    """Noise generator: (gamma/2) sum over i of (site^2 + bond^2) applied to f."""
    g = _coerce(gamma)
    site_range, bond_range = _field_index_range(f)
    out = LocalPolynomial.zero(f.mode)
    for i in site_range:
        out = out + vf_apply(vf_apply(f, "site", i), "site", i)
    for i in bond_range:
        out = out + vf_apply(vf_apply(f, "bond", i), "bond", i)
    return (g / 2) * out


def apply_generator(f: LocalPolynomial, gamma) -> LocalPolynomial:
    """Full generator: drift part plus gamma-weighted noise part."""
    return apply_hamiltonian_generator(f) + apply_noise_generator(f, gamma)


def forward_difference(f: LocalPolynomial) -> LocalPolynomial:
    """Lattice gradient convention used throughout: shift(f, 1) - f."""
    return f.shift(1) - f


# -- harmonic fluctuation-dissipation residual -------------------------------


def harmonic_fd_gradient_part(gamma) -> LocalPolynomial:
    """The quadratic whose forward difference appears in the exact harmonic
    current decomposition: (1/(6 gamma) + gamma/4) p_0^2 + (1/(6 gamma)) r_0 r_1.

    The r_0 r_1 coefficient is forced: requiring the residual below to
    vanish identically in gamma fixes it to 1/(6 gamma) (a fixed 1/2
    closes the identity only at gamma = 1/3).
    """
    g = _coerce(gamma)
    m = "harmonic"
    alpha = 1 / (6 * g) + g / 4
    return alpha * (p(0, m) * p(0, m)) + (1 / (6 * g)) * (r(0, m) * r(1, m))


def harmonic_fd_generator_part(gamma) -> LocalPolynomial:
    """The local function fed to the generator in the harmonic
    decomposition: (1/(6 gamma)) (p_0 + p_1) r_1 + r_1^2/4."""
    g = _coerce(gamma)
    m = "harmonic"
    return (1 / (6 * g)) * ((p(0, m) + p(1, m)) * r(1, m)) + Fraction(1, 4) * (
        r(1, m) * r(1, m)
    )


def harmonic_fd_residual(gamma) -> LocalPolynomial:
    """Residual of the exact harmonic current decomposition.

    Computes, in exact rational arithmetic,

        W_drift + W_noise + diff(gradient part) - L(generator part)

    for the bond (0, 1) of the harmonic chain, where diff is
    :func:`forward_difference` and L the full generator at this gamma.
    The result must be the zero polynomial for every gamma > 0; any
    perturbation of a coefficient breaks it.
    """
    g = _coerce(gamma)
    if g <= 0:
        raise ValueError("gamma must be positive")
    m = "harmonic"
    w = bond_current_drift(0, m) + bond_current_noise(0, g, m)
    grad_term = forward_difference(harmonic_fd_gradient_part(g))
    gen_term = apply_generator(harmonic_fd_generator_part(g), g)
    return w + grad_term - gen_term
