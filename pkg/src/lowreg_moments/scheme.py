"""Symbolic assembly of the second-moment schemes and their physical-space form."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Iterable, Mapping, Optional

import sympy

from .forests import NOISE_MODES, REAL, SUPPORTED_ORDERS, oriented_classes
from .oscillatory import PHYSICAL, SYMBOLIC, paired_approx
from .trees import (
    K_SYMBOL,
    DispersionSpec,
    LinearFrequency,
    symbol_name,
    symmetry_factor,
    upsilon,
)

TAU = sympy.Symbol("tau", positive=True)


@lru_cache(maxsize=None)
def freq_symbol(index: int) -> sympy.Symbol:
    return sympy.Symbol(symbol_name(index), integer=True)


def symbol_values(indices: Iterable[int]) -> dict[int, sympy.Symbol]:
    return {i: freq_symbol(i) for i in indices}


Factor = tuple[LinearFrequency, int]


def _orient(f: LinearFrequency, bar: int, mode: str) -> Factor:
    """Real data satisfy v_{-f} = conj(v_f): fix the sign of the leading coefficient."""
    if mode == REAL:
        if f.is_zero:
            return (f, 0)
        if f.coeffs[0][1] < 0:
            return (-f, 1 - bar)
    return (f, bar)


@dataclass(frozen=True)
class SchemeTerm:
    """coeff * tau**power * prod v-factors, summed over the free symbols."""

    power: int
    coeff: sympy.Expr
    factors: tuple[Factor, ...]
    free: tuple[int, ...]

    def relabel(self, mapping: Mapping[int, LinearFrequency], mode: str) -> "SchemeTerm":
        subs = {freq_symbol(i): f.evaluate(symbol_values(f.symbols())) for i, f in mapping.items()}
        factors = tuple(sorted(_orient(f.substitute(mapping), b, mode) for f, b in self.factors))
        coeff = sympy.expand(self.coeff.xreplace(subs)) if subs else self.coeff
        return SchemeTerm(self.power, coeff, factors, self.free)

    def pattern(self) -> str:
        """v-factors rendered with |v_f|^2 grouping."""
        remaining = list(self.factors)
        parts = []
        while remaining:
            f, b = remaining.pop(0)
            partner = (f, 1 - b)
            if partner in remaining:
                remaining.remove(partner)
                parts.append(f"|v[{f}]|^2")
            else:
                parts.append(f"{'vbar' if b else 'v'}[{f}]")
        return " ".join(parts) if parts else "1"


def _variants(term: SchemeTerm, mode: str):
    free = term.free
    targets = tuple(range(1, len(free) + 1))
    for perm in itertools.permutations(targets):
        for signs in itertools.product((1, -1), repeat=len(free)):
            mapping = {old: LinearFrequency.symbol(new, s) for old, new, s in zip(free, perm, signs)}
            yield term.relabel(mapping, mode)


def _normal_term(term: SchemeTerm, mode: str) -> SchemeTerm:
    """Canonical free-symbol naming; the coefficient is averaged over the
    relabelings that leave the v-factors unchanged."""
    variants = list(_variants(term, mode))
    best = min(v.factors for v in variants)
    matching = [v for v in variants if v.factors == best]
    coeff = sympy.expand(sum((v.coeff for v in matching), sympy.Integer(0)) / len(matching))
    return SchemeTerm(term.power, coeff, best, tuple(range(1, len(term.free) + 1)))


@dataclass
class SchemeExpression:
    """V_k(tau, v) as a sum of :class:`SchemeTerm` in normal form."""

    terms: list[SchemeTerm]
    mode: str = REAL
    name: str = ""

    def __post_init__(self) -> None:
        merged: dict[tuple, sympy.Expr] = {}
        order: list[tuple] = []
        for term in self.terms:
            t = _normal_term(term, self.mode)
            key = (t.power, t.factors, t.free)
            if key not in merged:
                merged[key] = sympy.Integer(0)
                order.append(key)
            merged[key] = merged[key] + t.coeff
        out = []
        for key in sorted(order, key=lambda k: (k[0], len(k[2]), str(k[1]))):
            coeff = sympy.expand(merged[key])
            if coeff != 0:
                out.append(SchemeTerm(key[0], coeff, key[1], key[2]))
        self.terms = out

    def as_dict(self) -> dict[tuple, sympy.Expr]:
        return {(t.power, t.factors, t.free): t.coeff for t in self.terms}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SchemeExpression):
            return NotImplemented
        a, b = self.as_dict(), other.as_dict()
        if a.keys() != b.keys():
            return False
        return all(sympy.expand(a[key] - b[key]) == 0 for key in a)

    def difference(self, other: "SchemeExpression") -> "SchemeExpression":
        neg = [SchemeTerm(t.power, -t.coeff, t.factors, t.free) for t in other.terms]
        return SchemeExpression(list(self.terms) + neg, self.mode, f"{self.name}-{other.name}")

    def max_power(self) -> int:
        return max((t.power for t in self.terms), default=0)

    def powers(self) -> set[int]:
        return {t.power for t in self.terms}

    def is_real(self) -> bool:
        return all(sympy.simplify(sympy.im(t.coeff)) == 0 for t in self.terms)

    def evaluate(
        self,
        profile: Callable[[int], Any],
        k: int,
        tau: Any,
        kmax: int,
        exact: bool = False,
    ) -> Any:
        """Value at one external frequency, free sums cut at |k_i| <= kmax.

        ``exact=True`` expects a profile returning sympy numbers and keeps
        exact arithmetic throughout.
        """
        total: Any = sympy.Integer(0) if exact else 0.0
        rng = range(-kmax, kmax + 1)
        for term in self.terms:
            coeff_fn = sympy.lambdify(
                [TAU] + [freq_symbol(i) for i in (K_SYMBOL,) + term.free], term.coeff, "sympy" if exact else "math"
            ) if not exact else None
            for combo in itertools.product(rng, repeat=len(term.free)):
                values = {K_SYMBOL: k, **dict(zip(term.free, combo))}
                prod: Any = 1
                for f, bar in term.factors:
                    val = profile(f.evaluate(values))
                    if exact:
                        val = sympy.conjugate(val) if bar else val
                    else:
                        val = complex(val).conjugate() if bar else complex(val)
                    prod = prod * val
                    if prod == 0:
                        break
                if prod == 0:
                    continue
                if exact:
                    subs = {freq_symbol(i): v for i, v in values.items()}
                    subs[TAU] = tau
                    total = total + term.coeff.xreplace(subs) * tau**term.power * prod
                else:
                    args = [tau] + [values[i] for i in (K_SYMBOL,) + term.free]
                    total = total + complex(coeff_fn(*args)) * tau**term.power * prod
        return sympy.nsimplify(total) if exact and total == 0 else total

    def to_fourier(self) -> str:
        lines = []
        for t in self.terms:
            sums = "".join(f"sum_{symbol_name(i)} " for i in t.free)
            lines.append(f"({sympy.factor(t.coeff)}) * tau^{t.power} * {sums}{t.pattern()}")
        return "V_k = " + "\n    + ".join(lines)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "mode": self.mode,
            "terms": [
                {
                    "tau_power": t.power,
                    "coefficient": str(t.coeff),
                    "sum_over": [symbol_name(i) for i in t.free],
                    "factors": [{"freq": str(f), "conj": b} for f, b in t.factors],
                }
                for t in self.terms
            ],
        }


# -- assembly -------------------------------------------------------------------------


def assemble_scheme(
    spec: DispersionSpec,
    r: int,
    n: Optional[int] = None,
    mode: str = REAL,
    convention: str = PHYSICAL,
) -> SchemeExpression:
    """Sum over ordered paired forests of
    conj(Y(T1)) Y(T2) / (S(T1) S(T2)) * Q_{<=r+1}(conj(Pi^{n,r} T1) Pi^{n,r} T2)."""
    if r not in SUPPORTED_ORDERS:
        raise ValueError(f"order r={r} outside the supported range {SUPPORTED_ORDERS}")
    if mode not in NOISE_MODES:
        raise ValueError(f"unknown noise mode {mode!r}")
    terms: list[SchemeTerm] = []
    for cls in oriented_classes(spec, r, mode):
        for pf in cls.members:
            ups = upsilon(pf.left, spec).conjugate() * upsilon(pf.right, spec)
            scale = ups.scalar / (symmetry_factor(pf.left) * symmetry_factor(pf.right))
            values = symbol_values((K_SYMBOL,) + pf.free_symbols)
            poly = paired_approx(pf.left, pf.right, values, spec, r, n, SYMBOLIC, convention)
            factors = tuple(_orient(f, b, mode) for f, b in ups.factors)
            for power, c in enumerate(poly):
                c = sympy.expand(scale * c)
                if c != 0:
                    terms.append(SchemeTerm(power, c, factors, pf.free_symbols))
    out = SchemeExpression(terms, mode, f"{spec.name}{r + 1}")
    if not out.is_real():
        raise AssertionError("assembled scheme has a non-real coefficient")
    return out


# -- physical-space form -------------------------------------------------------------

LOCAL = "local"
MOMENT = "moment"
CONVOLUTION = "convolution"

STABILIZED_SCHEMES = ("nls2", "kdv2")


class UnmatchedTerm(ValueError):
    """A scheme term outside the physical-space catalog."""


@dataclass(frozen=True)
class PhysicalMonomial:
    """coeff * k^e0 * k1^e1 * ... with optional filters on chosen variables.

    ``filters`` holds (filter id, variable positions); position 0 is k.
    """

    coeff: sympy.Expr
    exps: tuple[int, ...]
    filters: tuple[tuple[str, tuple[int, ...]], ...] = ()


@dataclass(frozen=True)
class PhysicalTerm:
    """One catalog operation applied to w = u * u~ (Fourier coefficients |u_k|^2).

    local:        k-polynomial times w_k
    moment:       w_k times products of spectral scalars sum_j k_j^e |u_j|^2
    convolution:  pointwise products of weighted copies of w in physical space
    """

    power: int
    kind: str
    arity: int
    monomials: tuple[PhysicalMonomial, ...]

    def render(self) -> str:
        parts = []
        for mono in self.monomials:
            parts.append(f"({mono.coeff})*" + _render_monomial(self.kind, mono))
        return f"tau^{self.power} * [" + " + ".join(parts) + "]"


def _op(e: int, filt: Optional[str]) -> str:
    base = "" if e == 0 else ("D" if e == 1 else f"D^{e}")
    if filt:
        base = f"{filt}(D)" + (" " + base if base else "")
    return base


def _render_monomial(kind: str, mono: PhysicalMonomial) -> str:
    filt = {pos[0]: fid for fid, pos in mono.filters if len(pos) == 1}
    for fid, pos in mono.filters:
        if len(pos) > 1:
            for p in pos:
                filt[p] = fid
    head = _op(mono.exps[0], filt.get(0))
    if kind == LOCAL:
        return f"{head} w".strip()
    if kind == MOMENT:
        scalars = []
        for j, e in enumerate(mono.exps[1:], start=1):
            f = filt.get(j)
            label = f"M[{e}{',' + f if f else ''}]"
            scalars.append(label)
        return f"{head} w * " + " * ".join(scalars) if scalars else f"{head} w"
    factors = []
    for j, e in enumerate(mono.exps[1:], start=1):
        inner = _op(e, filt.get(j))
        factors.append(f"({inner} w)" if inner else "w")
    return f"{head}(" + " . ".join(factors + ["w"]) + ")"


@dataclass(frozen=True)
class PhysicalScheme:
    """Physical-space recipe; ``w = u * u~`` and ``D = -i d/dx``.

    ``M[e] = sum_k k^e |u_k|^2`` are spectral scalars (M[0] = ||u||^2), and
    ``.`` is the pointwise product in physical space.
    """

    name: str
    terms: tuple[PhysicalTerm, ...]

    def render(self) -> str:
        lines = ["u^(l+1) = " + "\n        + ".join(t.render() for t in self.terms)]
        lines.append("  with w = u^l * u~^l, u~(x) = conj(u(-x)), D = -i d/dx, M[e] = sum_k k^e |u_k|^2")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "terms": [
                {
                    "tau_power": t.power,
                    "kind": t.kind,
                    "arity": t.arity,
                    "monomials": [
                        {
                            "coefficient": str(m.coeff),
                            "exponents": list(m.exps),
                            "filters": [[f, list(p)] for f, p in m.filters],
                        }
                        for m in t.monomials
                    ],
                }
                for t in self.terms
            ],
        }


def _abs2_groups(term: SchemeTerm) -> list[LinearFrequency]:
    remaining = list(term.factors)
    groups = []
    while remaining:
        f, b = remaining.pop(0)
        partner = (f, 1 - b)
        if partner not in remaining:
            raise UnmatchedTerm(f"unpaired factor in {term.pattern()}")
        remaining.remove(partner)
        groups.append(f)
    return groups


def _classify(term: SchemeTerm) -> str:
    groups = _abs2_groups(term)
    k = LinearFrequency.symbol(K_SYMBOL)
    singles = [LinearFrequency.symbol(i) for i in term.free]
    if sorted(groups) == sorted([k] + singles):
        return LOCAL if not term.free else MOMENT
    outer = k
    for s in singles:
        outer = outer - s
    if term.free and sorted(groups) == sorted([outer] + singles):
        return CONVOLUTION
    raise UnmatchedTerm(f"no physical-space rendering for {term.pattern()}")


def to_physical(e: SchemeExpression) -> PhysicalScheme:
    """Render every Fourier term through the closed catalog."""
    terms = []
    for t in e.terms:
        kind = _classify(t)
        syms = [freq_symbol(K_SYMBOL)] + [freq_symbol(i) for i in t.free]
        poly = sympy.Poly(t.coeff, *syms)
        monos = tuple(PhysicalMonomial(sympy.nsimplify(c), tuple(exps)) for exps, c in poly.terms())
        terms.append(PhysicalTerm(t.power, kind, len(t.free), monos))
    return PhysicalScheme(e.name, tuple(terms))


def _filters_for(scheme_id: str, kind: str, exps: tuple[int, ...]) -> tuple[tuple[str, tuple[int, ...]], ...]:
    if scheme_id == "nls2":
        return tuple(("psi", (j,)) for j, e in enumerate(exps) if e >= 2)
    if scheme_id == "kdv2":
        if kind == CONVOLUTION and exps[0] >= 2:
            return (("psi1", (0,)),)
        if exps[0] >= 1 and any(e >= 1 for e in exps[1:]):
            j = next(j for j, e in enumerate(exps) if j and e >= 1)
            return (("psi2", (0, j)),)
        if exps[0] >= 2:
            return (("psi3", (0,)),)
        return ()
    raise ValueError(f"no stabilization rule for scheme {scheme_id!r}; expected {STABILIZED_SCHEMES}")


def stabilize(p: PhysicalScheme, scheme_id: str) -> PhysicalScheme:
    """Premultiply derivative-bearing monomials by their filter functions."""
    terms = []
    for t in p.terms:
        monos = tuple(
            PhysicalMonomial(m.coeff, m.exps, _filters_for(scheme_id, t.kind, m.exps)) for m in t.monomials
        )
        terms.append(PhysicalTerm(t.power, t.kind, t.arity, monos))
    return PhysicalScheme(p.name + "_stab", tuple(terms))
