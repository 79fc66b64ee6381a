"""Characters on decorated forests: exact iterated integrals, their full-Taylor
approximation, the truncation to a fixed power of tau and the local-error
functional.

Every evaluation produces an :class:`OscillatorySum`, a finite sum of
polynomials in tau times exponentials ``exp(i tau phase)``.  Arithmetic runs
over one of two rings: floating complex numbers with integer phases for
numerical work, or sympy expressions for exact symbolic assembly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Sequence, Union

import numpy as np
import sympy

from .trees import (
    DecoratedTree,
    DispersionSpec,
    TreeOrForest,
    as_forest,
    degree,
    n_plus_hat,
)

FrequencyAssignment = Mapping[int, Any]

RESONANCE_TOL = 1e-9

# Sign of the Duhamel factor on conjugate integrator edges.  "physical" uses
# conj(-i) = +i, the factor of the conjugated equation; "printed" keeps -i on
# every integrator edge.
PHYSICAL = "physical"
PRINTED = "printed"
CONVENTIONS = (PHYSICAL, PRINTED)


# -- coefficient rings ------------------------------------------------------------


@dataclass(frozen=True)
class Ring:
    """Scalar operations used by the characters."""

    name: str
    unit: Any
    imag: Any
    frac: Callable[[int, int], Any]
    conj: Callable[[Any], Any]
    canon: Callable[[Any], Any]
    is_zero: Callable[[Any], bool]
    is_zero_phase: Callable[[Any], bool]


def _sym_zero(x: Any) -> bool:
    return sympy.expand(x) == 0


NUMERIC = Ring(
    name="numeric",
    unit=1.0 + 0.0j,
    imag=1j,
    frac=lambda a, b: a / b,
    conj=lambda x: complex(x).conjugate(),
    canon=lambda phi: phi,
    is_zero=lambda x: x == 0,
    is_zero_phase=lambda phi: abs(phi) < RESONANCE_TOL,
)

SYMBOLIC = Ring(
    name="symbolic",
    unit=sympy.Integer(1),
    imag=sympy.I,
    frac=sympy.Rational,
    conj=sympy.conjugate,
    canon=sympy.expand,
    is_zero=_sym_zero,
    is_zero_phase=_sym_zero,
)


# -- oscillatory sums ---------------------------------------------------------------


def _poly_add(a: Sequence[Any], b: Sequence[Any]) -> list[Any]:
    n = max(len(a), len(b))
    return [(a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) for i in range(n)]


def _poly_mul(a: Sequence[Any], b: Sequence[Any]) -> list[Any]:
    if not a or not b:
        return []
    out: list[Any] = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x == 0:
            continue
        for j, y in enumerate(b):
            out[i + j] = out[i + j] + x * y
    return out


@dataclass
class OscillatorySum:
    """``sum_phase poly_phase(tau) * exp(i tau phase)``; coefficients ascend in tau."""

    terms: dict[Any, list[Any]] = field(default_factory=dict)
    ring: Ring = NUMERIC

    def __post_init__(self) -> None:
        if self.ring is NUMERIC:
            self._normalize_numeric()
            return
        merged: dict[Any, list[Any]] = {}
        for phase, poly in self.terms.items():
            key = self.ring.canon(phase)
            if self.ring.is_zero_phase(key):
                key = 0
            merged[key] = _poly_add(merged.get(key, []), list(poly))
        self.terms = {}
        for phase, poly in merged.items():
            poly = [self.ring.canon(c) if self.ring is SYMBOLIC else c for c in poly]
            while poly and self.ring.is_zero(poly[-1]):
                poly.pop()
            if poly:
                self.terms[phase] = poly

    def _normalize_numeric(self) -> None:
        out: dict[Any, list[Any]] = {}
        for phase, poly in self.terms.items():
            key = 0 if abs(phase) < RESONANCE_TOL else phase
            if key in out:
                poly = _poly_add(out[key], poly)
            else:
                poly = list(poly)
            while poly and poly[-1] == 0:
                poly.pop()
            if poly:
                out[key] = poly
            else:
                out.pop(key, None)
        self.terms = out

    # construction
    @classmethod
    def constant(cls, value: Any, ring: Ring = NUMERIC) -> "OscillatorySum":
        return cls({0: [value]}, ring)

    @classmethod
    def monomial(cls, power: int, phase: Any = 0, coeff: Any = None, ring: Ring = NUMERIC) -> "OscillatorySum":
        c = ring.unit if coeff is None else coeff
        return cls({phase: [0] * power + [c]}, ring)

    @classmethod
    def zero(cls, ring: Ring = NUMERIC) -> "OscillatorySum":
        return cls({}, ring)

    # algebra
    def __add__(self, other: "OscillatorySum") -> "OscillatorySum":
        terms = {p: list(c) for p, c in self.terms.items()}
        for p, c in other.terms.items():
            terms[p] = _poly_add(terms.get(p, []), c)
        return OscillatorySum(terms, self.ring)

    def __mul__(self, other: Union["OscillatorySum", Any]) -> "OscillatorySum":
        if not isinstance(other, OscillatorySum):
            return OscillatorySum({p: [x * other for x in c] for p, c in self.terms.items()}, self.ring)
        terms: dict[Any, list[Any]] = {}
        for p, a in self.terms.items():
            for q, b in other.terms.items():
                key = self.ring.canon(p + q)
                terms[key] = _poly_add(terms.get(key, []), _poly_mul(a, b))
        return OscillatorySum(terms, self.ring)

    __rmul__ = __mul__

    def conjugate(self) -> "OscillatorySum":
        """Complex conjugate for real tau and real phases."""
        return OscillatorySum(
            {-p: [self.ring.conj(x) for x in c] for p, c in self.terms.items()}, self.ring
        )

    # inspection
    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_polynomial(self) -> bool:
        return all(p == 0 for p in self.terms)

    def polynomial(self) -> list[Any]:
        """Coefficients of a phase-free sum; raises if a phase survives."""
        if not self.is_polynomial:
            raise ValueError(f"residual phases {sorted(map(str, self.terms))}")
        return list(self.terms.get(0, []))

    def coefficient(self, power: int) -> "OscillatorySum":
        """Part multiplying tau**power, kept with its exponential."""
        return OscillatorySum(
            {p: [c[power]] for p, c in self.terms.items() if power < len(c)}, self.ring
        )

    def max_power(self) -> int:
        return max((len(c) - 1 for c in self.terms.values()), default=-1)

    def __call__(self, tau: Any) -> Any:
        tau = np.asarray(tau, dtype=float)
        total = np.zeros_like(tau, dtype=complex)
        for phase, poly in self.terms.items():
            value = np.zeros_like(tau, dtype=complex)
            for c in reversed(poly):
                value = value * tau + complex(c)
            total = total + value * np.exp(1j * tau * float(phase))
        return total if total.ndim else complex(total)


# -- exact time integrals -------------------------------------------------------------


def integrate_monomial(q: int, phase: Any, ring: Ring = NUMERIC) -> OscillatorySum:
    """Closed form of int_0^tau xi**q exp(i xi phase) d xi."""
    if ring.is_zero_phase(phase):
        return OscillatorySum.monomial(q + 1, 0, ring.frac(1, q + 1) * ring.unit, ring)
    inv = ring.unit / (ring.imag * phase)
    poly: list[Any] = [inv]
    const = -inv
    for j in range(1, q + 1):
        poly = [-j * inv * c for c in poly]
        poly = _poly_add(poly, [0] * j + [inv])
        const = -j * inv * const
    return OscillatorySum({phase: poly, 0: [const]}, ring)


def integrate(g: OscillatorySum) -> OscillatorySum:
    """int_0^tau g(xi) d xi, term by term."""
    out = OscillatorySum.zero(g.ring)
    for phase, poly in g.terms.items():
        for q, c in enumerate(poly):
            if not g.ring.is_zero(c):
                out = out + integrate_monomial(q, phase, g.ring) * c
    return out


# -- edge data ----------------------------------------------------------------------


def edge_phase(spec: DispersionSpec, tree: DecoratedTree, values: FrequencyAssignment) -> Any:
    return spec.phase(tree.label, tree.conj, tree.freq.evaluate(values))


def integrator_factor(
    spec: DispersionSpec,
    tree: DecoratedTree,
    values: FrequencyAssignment,
    ring: Ring,
    convention: str = PHYSICAL,
) -> Any:
    """Duhamel factor of an integrator edge: -i |nabla|^alpha(k), conjugated
    on conjugate edges under the physical convention."""
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown sign convention {convention!r}")
    sign = 1 if tree.conj and convention == PHYSICAL else -1
    return sign * ring.imag * spec.grad(tree.freq.evaluate(values))


# -- the exact character ------------------------------------------------------------


def eval_pi(
    obj: TreeOrForest,
    values: FrequencyAssignment,
    spec: DispersionSpec,
    ring: Ring = NUMERIC,
    convention: str = PHYSICAL,
) -> OscillatorySum:
    """Exact iterated oscillatory integral encoded by a tree or forest."""
    out = OscillatorySum.constant(ring.unit, ring)
    for tree in as_forest(obj):
        out = out * _pi_tree(tree, values, spec, ring, convention)
    return out


def _pi_tree(
    tree: DecoratedTree, values: FrequencyAssignment, spec: DispersionSpec, ring: Ring, convention: str
) -> OscillatorySum:
    inner = eval_pi(tree.children, values, spec, ring, convention)
    phase = edge_phase(spec, tree, values)
    local = OscillatorySum.monomial(tree.ell, phase, ring=ring)
    if not spec.is_integrator(tree.label):
        return local * inner
    return integrate(local * inner) * integrator_factor(spec, tree, values, ring, convention)


# -- full-Taylor approximation ------------------------------------------------------------


def taylor_K(
    factor: Any,
    r: int,
    q: int,
    total_phase: Any,
    ring: Ring = NUMERIC,
) -> OscillatorySum:
    """Full Taylor expansion of ``factor * int_0^tau xi**q exp(i xi total_phase)``.

    ``factor`` is the Duhamel factor of the edge, -i |nabla|^alpha(k) on a
    plain edge.  The result is a polynomial of degree at most r + 1.
    """
    if q > r:
        raise ValueError(f"monomial degree q={q} exceeds order r={r}")
    poly: list[Any] = [0] * (r + 2)
    for ell in range(r - q + 1):
        c = ring.frac(1, math.factorial(ell) * (ell + q + 1))
        poly[ell + q + 1] = factor * c * (ring.imag * total_phase) ** ell
    return OscillatorySum({0: poly}, ring)


def _K_apply(g: OscillatorySum, edge_phase_value: Any, factor: Any, r: int) -> OscillatorySum:
    out = OscillatorySum.zero(g.ring)
    for phase, poly in g.terms.items():
        total = edge_phase_value + phase
        for q, c in enumerate(poly):
            if q > r or g.ring.is_zero(c):
                continue
            out = out + taylor_K(factor, r, q, total, g.ring) * c
    return out


def eval_pi_nr(
    obj: TreeOrForest,
    values: FrequencyAssignment,
    spec: DispersionSpec,
    r: int,
    n: Optional[int] = None,
    ring: Ring = NUMERIC,
    convention: str = PHYSICAL,
) -> OscillatorySum:
    """Order-r approximation of the character with every time integral Taylor
    expanded in its total phase.

    ``n`` is the a priori regularity; with full Taylor expansion it does not
    change the result and is accepted for interface completeness.
    """
    out = OscillatorySum.constant(ring.unit, ring)
    for tree in as_forest(obj):
        if r + 1 < degree(tree, spec):
            return OscillatorySum.zero(ring)
        out = out * _pi_nr_tree(tree, values, spec, r, ring, convention)
    return out


def _pi_nr_tree(
    tree: DecoratedTree, values: FrequencyAssignment, spec: DispersionSpec, r: int, ring: Ring, convention: str
) -> OscillatorySum:
    phase = edge_phase(spec, tree, values)
    if not spec.is_integrator(tree.label):
        inner = eval_pi_nr(tree.children, values, spec, r - tree.ell, ring=ring, convention=convention)
        return OscillatorySum.monomial(tree.ell, phase, ring=ring) * inner
    inner = eval_pi_nr(tree.children, values, spec, r - tree.ell - 1, ring=ring, convention=convention)
    g = OscillatorySum.monomial(tree.ell, 0, ring=ring) * inner
    return _K_apply(g, phase, integrator_factor(spec, tree, values, ring, convention), r)


# -- truncation ----------------------------------------------------------------------


def truncate(s: OscillatorySum, r: int) -> list[Any]:
    """Coefficients of tau^0 .. tau^(r+1) of a phase-free sum."""
    poly = s.polynomial()
    poly = poly[: r + 2]
    return poly + [0] * (r + 2 - len(poly))


def paired_exact(
    left: TreeOrForest,
    right: TreeOrForest,
    values: FrequencyAssignment,
    spec: DispersionSpec,
    ring: Ring = NUMERIC,
    convention: str = PHYSICAL,
) -> OscillatorySum:
    """conj(Pi left) * Pi right."""
    a = eval_pi(left, values, spec, ring, convention).conjugate()
    return a * eval_pi(right, values, spec, ring, convention)


def paired_approx(
    left: TreeOrForest,
    right: TreeOrForest,
    values: FrequencyAssignment,
    spec: DispersionSpec,
    r: int,
    n: Optional[int] = None,
    ring: Ring = NUMERIC,
    convention: str = PHYSICAL,
) -> list[Any]:
    """Q_{<= r+1}(conj(Pi^{n,r} left) * Pi^{n,r} right) as tau coefficients."""
    a = eval_pi_nr(left, values, spec, r, n, ring, convention).conjugate()
    b = eval_pi_nr(right, values, spec, r, n, ring, convention)
    return truncate(a * b, r)


def poly_eval(poly: Sequence[Any], tau: Any) -> Any:
    tau = np.asarray(tau, dtype=float)
    total = np.zeros_like(tau, dtype=complex)
    for c in reversed(poly):
        total = total * tau + complex(c)
    return total if total.ndim else complex(total)


# -- local-error functional ------------------------------------------------------------


@dataclass(frozen=True)
class ErrorMonomialSet:
    """Sum of weight * |monomial| terms bounding a local error at one assignment."""

    terms: tuple[tuple[float, float], ...] = ()

    @classmethod
    def one(cls) -> "ErrorMonomialSet":
        return cls(((1.0, 1.0),))

    @classmethod
    def single(cls, weight: float, monomial: float) -> "ErrorMonomialSet":
        return cls(((float(weight), float(monomial)),))

    def __add__(self, other: "ErrorMonomialSet") -> "ErrorMonomialSet":
        return ErrorMonomialSet(self.terms + other.terms)

    def scale(self, weight: float) -> "ErrorMonomialSet":
        return ErrorMonomialSet(tuple((w * weight, m) for w, m in self.terms))

    def times_monomial(self, monomial: float) -> "ErrorMonomialSet":
        return ErrorMonomialSet(tuple((w, m * monomial) for w, m in self.terms))

    @property
    def value(self) -> float:
        return float(sum(abs(w * m) for w, m in self.terms))

    @property
    def dominant(self) -> float:
        return max((abs(w * m) for w, m in self.terms), default=0.0)


def _pi_zero(forest: Sequence[DecoratedTree], values: FrequencyAssignment, spec: DispersionSpec) -> float:
    out = 1.0
    for tree in forest:
        for node in tree.nodes():
            if spec.is_integrator(node.label):
                out *= abs(spec.grad(node.freq.evaluate(values)))
    return out


def _coefficient_bound(s: OscillatorySum, power: int) -> float:
    return float(sum(abs(complex(c[power])) for c in s.terms.values() if power < len(c)))


def _remainder(g: OscillatorySum, edge_phase_value: Any, grad: Any, r: int) -> ErrorMonomialSet:
    terms = []
    for phase, poly in g.terms.items():
        total = abs(float(edge_phase_value + phase))
        for q, c in enumerate(poly):
            c = abs(complex(c))
            if c == 0:
                continue
            power = max(r + 1 - q, 0)
            terms.append((c, total**power * abs(grad)))
    return ErrorMonomialSet(tuple(terms))


def local_error(
    obj: TreeOrForest,
    n: int,
    r: int,
    values: FrequencyAssignment,
    spec: DispersionSpec,
) -> ErrorMonomialSet:
    """Recursive local-error functional L^r_low evaluated at an assignment.

    A forest is split as its first tree times the remaining ones.
    """
    forest = tuple(as_forest(obj))
    if r < 0 or not forest:
        return ErrorMonomialSet.one()
    if len(forest) > 1:
        first, rest = forest[:1], forest[1:]
        shift = n_plus_hat(rest, spec)
        out = local_error(first, n, r - shift, values, spec).scale(_pi_zero(rest, values, spec))
        approx = eval_pi_nr(first, values, spec, r - shift, n)
        for ell in range(0, r + 2 - shift):
            bound = _coefficient_bound(approx, ell)
            if bound:
                out = out + local_error(rest, n, r - ell, values, spec).scale(bound)
        return out
    tree = forest[0]
    if not spec.is_integrator(tree.label):
        return local_error(tree.children, n, r - tree.ell, values, spec)
    grad = spec.grad(tree.freq.evaluate(values))
    inner_r = r - tree.ell - 1
    out = local_error(tree.children, n, inner_r, values, spec).scale(abs(grad))
    g = OscillatorySum.monomial(tree.ell) * eval_pi_nr(tree.children, values, spec, inner_r, n)
    return out + _remainder(g, edge_phase(spec, tree, values), grad, r)


# -- order check -------------------------------------------------------------------------


EXACT = "exact"


@dataclass(frozen=True)
class OrderResult:
    slope: Optional[float]
    errors: tuple[float, ...]
    taus: tuple[float, ...]

    @property
    def exact(self) -> bool:
        return self.slope is None

    def label(self) -> str:
        return EXACT if self.exact else f"{self.slope:.3f}"


def approximation_error(
    left: TreeOrForest,
    right: TreeOrForest,
    values: FrequencyAssignment,
    spec: DispersionSpec,
    r: int,
    taus: Sequence[float],
    n: Optional[int] = None,
    convention: str = PHYSICAL,
) -> np.ndarray:
    exact = paired_exact(left, right, values, spec, convention=convention)
    approx = paired_approx(left, right, values, spec, r, n, convention=convention)
    taus = np.asarray(taus, dtype=float)
    return np.abs(exact(taus) - poly_eval(approx, taus))


def fit_slope(taus: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope in log-log; exact zeros (roundoff hits) are skipped."""
    t = np.asarray(taus, dtype=float)
    e = np.asarray(errors, dtype=float)
    keep = e > 0
    if keep.sum() < 2:
        raise ValueError("need at least two nonzero errors to fit a slope")
    return float(np.polyfit(np.log(t[keep]), np.log(e[keep]), 1)[0])


def order_check(
    left: TreeOrForest,
    right: TreeOrForest,
    n: Optional[int],
    r: int,
    values: FrequencyAssignment,
    spec: DispersionSpec,
    taus: Sequence[float],
    tol: float = 1e-12,
    convention: str = PHYSICAL,
) -> OrderResult:
    """Least-squares slope of log|exact - truncated approximation| against log tau."""
    errors = approximation_error(left, right, values, spec, r, taus, n, convention)
    if float(np.max(errors)) < tol:
        return OrderResult(None, tuple(map(float, errors)), tuple(map(float, taus)))
    return OrderResult(fit_slope(taus, errors), tuple(map(float, errors)), tuple(map(float, taus)))


def geometric_taus(first_exp: int, last_exp: int) -> list[float]:
    """tau = 2**-first_exp, ..., 2**-last_exp."""
    return [2.0 ** (-e) for e in range(first_exp, last_exp + 1)]
