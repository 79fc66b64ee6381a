"""Decorated trees: data model, validity checks, degree, symmetry factors and
elementary-differential coefficients.

A tree is stored as the node record hanging below an edge.  The edge carries an
operator label and a conjugation bit, the node carries a linear frequency and a
monomial exponent, and the children form a multiset kept in canonical order.
Symbol ``0`` is reserved for the external frequency ``k``.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Iterable, Iterator, Mapping, Optional, Sequence, Union

import numpy as np
import sympy

K_SYMBOL = 0


# -- frequencies ---------------------------------------------------------------


@dataclass(frozen=True, order=True)
class LinearFrequency:
    """Integer linear combination of base frequency symbols."""

    coeffs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        merged: dict[int, int] = {}
        for index, c in self.coeffs:
            merged[index] = merged.get(index, 0) + int(c)
        normal = tuple(sorted((i, c) for i, c in merged.items() if c != 0))
        object.__setattr__(self, "coeffs", normal)

    @classmethod
    def symbol(cls, index: int, sign: int = 1) -> "LinearFrequency":
        return cls(((index, sign),))

    @classmethod
    def from_dict(cls, mapping: Mapping[Any, int]) -> "LinearFrequency":
        return cls(tuple((int(i), int(c)) for i, c in mapping.items()))

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def is_unit(self) -> bool:
        """True when every coefficient lies in {-1, 0, 1}."""
        return all(abs(c) == 1 for _, c in self.coeffs)

    def coefficient(self, index: int) -> int:
        for i, c in self.coeffs:
            if i == index:
                return c
        return 0

    def symbols(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.coeffs)

    def __add__(self, other: "LinearFrequency") -> "LinearFrequency":
        return LinearFrequency(self.coeffs + other.coeffs)

    def __neg__(self) -> "LinearFrequency":
        return LinearFrequency(tuple((i, -c) for i, c in self.coeffs))

    def __sub__(self, other: "LinearFrequency") -> "LinearFrequency":
        return self + (-other)

    def signed(self, conj: int) -> "LinearFrequency":
        return -self if conj else self

    def substitute(self, mapping: Mapping[int, "LinearFrequency"]) -> "LinearFrequency":
        out: list[tuple[int, int]] = []
        for i, c in self.coeffs:
            if i in mapping:
                out.extend((j, c * d) for j, d in mapping[i].coeffs)
            else:
                out.append((i, c))
        return LinearFrequency(tuple(out))

    def rename(self, mapping: Mapping[int, int]) -> "LinearFrequency":
        return LinearFrequency(tuple((mapping.get(i, i), c) for i, c in self.coeffs))

    def evaluate(self, values: Mapping[int, Any]) -> Any:
        total: Any = 0
        for i, c in self.coeffs:
            total = total + c * values[i]
        return total

    def to_dict(self) -> dict[str, int]:
        return {str(i): c for i, c in self.coeffs}

    def __str__(self) -> str:
        if not self.coeffs:
            return "0"
        parts = []
        for n, (i, c) in enumerate(self.coeffs):
            name = symbol_name(i)
            mag = "" if abs(c) == 1 else f"{abs(c)}*"
            if n == 0:
                parts.append(("-" if c < 0 else "") + mag + name)
            else:
                parts.append((" - " if c < 0 else " + ") + mag + name)
        return "".join(parts)


def symbol_name(index: int) -> str:
    return "k" if index == K_SYMBOL else f"k{index}"


# -- dispersion data -----------------------------------------------------------


def _power_sum(k: Any, power: int) -> Any:
    if isinstance(k, np.ndarray):
        return int(np.sum(k.astype(np.int64) ** power))
    return k**power


def _nls_linear(k: Any) -> Any:
    return -_power_sum(k, 2)


def _nls_integrator(k: Any) -> Any:
    return _power_sum(k, 2)


def _kdv_linear(k: Any) -> Any:
    return -_power_sum(k, 3)


def _kdv_integrator(k: Any) -> Any:
    return _power_sum(k, 3)


def _unit_symbol(k: Any) -> Any:
    return 1


def _first_power(k: Any) -> Any:
    if isinstance(k, np.ndarray):
        if k.size != 1:
            raise ValueError("first-derivative symbol is defined for d=1 only")
        return int(k.reshape(-1)[0])
    return k


@dataclass(frozen=True)
class DispersionSpec:
    """Equation data in Fourier space.

    ``dispersion[label]`` is the integer polynomial attached to a label;
    ``derivative`` is the symbol multiplying the nonlinearity; the
    nonlinearity is ``prefactor * u**N * conj(u)**M``.
    """

    name: str
    dispersion: Mapping[str, Callable[[Any], Any]]
    integrators: frozenset[str]
    nonlinearity: tuple[int, int]
    prefactor: sympy.Expr
    alpha: int
    derivative: Callable[[Any], Any]
    dim: int = 1
    alphabet: tuple[str, ...] = ("t1", "t2")

    @property
    def linear_label(self) -> str:
        return next(lab for lab in self.alphabet if lab not in self.integrators)

    @property
    def integrator_label(self) -> str:
        return next(lab for lab in self.alphabet if lab in self.integrators)

    def is_integrator(self, label: str) -> bool:
        return label in self.integrators

    def phase(self, label: str, conj: int, k: Any) -> Any:
        """Dispersion of an edge: (-1)^p P_label((-1)^p k)."""
        poly = self.dispersion[label]
        if conj:
            return -poly(-k)
        return poly(k)

    def grad(self, k: Any) -> Any:
        return self.derivative(k)

    def arity(self, conj: int) -> tuple[int, int]:
        """Numbers of (plain, conjugate) children below an inner node."""
        n, m = self.nonlinearity
        return (m, n) if conj else (n, m)


NLS = DispersionSpec(
    name="nls",
    dispersion={"t1": _nls_linear, "t2": _nls_integrator},
    integrators=frozenset({"t2"}),
    nonlinearity=(2, 1),
    prefactor=sympy.Integer(1),
    alpha=0,
    derivative=_unit_symbol,
)

KDV = DispersionSpec(
    name="kdv",
    dispersion={"t1": _kdv_linear, "t2": _kdv_integrator},
    integrators=frozenset({"t2"}),
    nonlinearity=(2, 0),
    prefactor=sympy.Rational(1, 2),
    alpha=1,
    derivative=_first_power,
)

SPECS = {"nls": NLS, "kdv": KDV}


def get_spec(name: str) -> DispersionSpec:
    try:
        return SPECS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown equation {name!r}; expected one of {sorted(SPECS)}") from None


# -- trees ---------------------------------------------------------------------


def _encode(obj: Any) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)


@dataclass(frozen=True)
class DecoratedTree:
    """Edge (label, conj) above a node with frequency ``freq`` and monomial ``ell``."""

    label: str
    conj: int
    freq: LinearFrequency
    ell: int = 0
    children: tuple["DecoratedTree", ...] = field(default=())

    def __post_init__(self) -> None:
        if self.conj not in (0, 1):
            raise ValueError("conjugation bit must be 0 or 1")
        if self.ell < 0:
            raise ValueError("monomial exponent must be nonnegative")
        ordered = tuple(sorted(self.children, key=lambda t: t.sort_key))
        object.__setattr__(self, "children", ordered)

    @cached_property
    def encoding(self) -> str:
        return _encode(self.to_json())

    @property
    def sort_key(self) -> tuple[str, int, str]:
        return (self.label, self.conj, self.encoding)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def to_json(self) -> dict[str, Any]:
        return {
            "edge": [self.label, self.conj],
            "freq": self.freq.to_dict(),
            "ell": self.ell,
            "children": [c.to_json() for c in self.children],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "DecoratedTree":
        label, conj = data["edge"]
        return cls(
            label=str(label),
            conj=int(conj),
            freq=LinearFrequency.from_dict(data.get("freq", {})),
            ell=int(data.get("ell", 0)),
            children=tuple(cls.from_json(c) for c in data.get("children", [])),
        )

    def nodes(self) -> Iterator["DecoratedTree"]:
        yield self
        for child in self.children:
            yield from child.nodes()

    def leaves(self) -> list["DecoratedTree"]:
        return [node for node in self.nodes() if node.is_leaf]

    def map_freq(self, fn: Callable[[LinearFrequency], LinearFrequency]) -> "DecoratedTree":
        return DecoratedTree(
            self.label,
            self.conj,
            fn(self.freq),
            self.ell,
            tuple(c.map_freq(fn) for c in self.children),
        )

    def substitute(self, mapping: Mapping[int, LinearFrequency]) -> "DecoratedTree":
        return self.map_freq(lambda f: f.substitute(mapping))

    def symbols(self) -> set[int]:
        out: set[int] = set()
        for node in self.nodes():
            out.update(node.freq.symbols())
        return out

    def __str__(self) -> str:
        head = f"I[{self.label},{self.conj}]({self.freq}"
        if self.ell:
            head += f"; l={self.ell}"
        if self.children:
            head += "; " + " ".join(str(c) for c in self.children)
        return head + ")"


Forest = tuple[DecoratedTree, ...]
TreeOrForest = Union[DecoratedTree, Sequence[DecoratedTree]]


def as_forest(obj: TreeOrForest) -> Forest:
    if isinstance(obj, DecoratedTree):
        return (obj,)
    return tuple(obj)


def leaf(freq: LinearFrequency, conj: int = 0, label: str = "t1") -> DecoratedTree:
    return DecoratedTree(label, conj, freq)


def canonical_form(tree: DecoratedTree) -> bytes:
    """Deterministic byte encoding, invariant under reordering of children."""
    return tree.encoding.encode()


def forest_encoding(forest: TreeOrForest) -> str:
    return _encode(sorted(t.encoding for t in as_forest(forest)))


# -- structural quantities -----------------------------------------------------


def kirchhoff_valid(tree: DecoratedTree) -> bool:
    """Signed frequency balance at every inner node."""
    for node in tree.nodes():
        if node.is_leaf:
            continue
        total = LinearFrequency()
        for child in node.children:
            total = total + child.freq.signed(child.conj)
        if node.freq.signed(node.conj) != total:
            return False
    return True


def degree(obj: TreeOrForest, spec: Optional[DispersionSpec] = None) -> int:
    """Maximal weighted path length: monomial exponents plus integrator edges."""
    forest = as_forest(obj)
    if not forest:
        return 0
    return max(_tree_degree(t, spec) for t in forest)


def _is_integrator(label: str, spec: Optional[DispersionSpec]) -> bool:
    if spec is None:
        return label == "t2"
    return spec.is_integrator(label)


def _tree_degree(tree: DecoratedTree, spec: Optional[DispersionSpec]) -> int:
    own = tree.ell + int(_is_integrator(tree.label, spec))
    return own + degree(tree.children, spec)


def n_plus(obj: TreeOrForest, spec: Optional[DispersionSpec] = None) -> int:
    """Number of integrator edges."""
    return sum(
        int(_is_integrator(node.label, spec))
        for tree in as_forest(obj)
        for node in tree.nodes()
    )


def n_plus_hat(obj: TreeOrForest, spec: Optional[DispersionSpec] = None) -> int:
    """Integrator edges plus the sum of monomial exponents."""
    forest = as_forest(obj)
    return n_plus(forest, spec) + sum(node.ell for t in forest for node in t.nodes())


@dataclass(frozen=True)
class ApproxTree:
    tree: DecoratedTree
    order: int


def project_order(
    tree: DecoratedTree, r: int, spec: Optional[DispersionSpec] = None
) -> Optional[ApproxTree]:
    """Order projection; ``None`` stands for the zero element."""
    if r < -1:
        raise ValueError("order must be at least -1")
    if r + 1 >= _tree_degree(tree, spec):
        return ApproxTree(tree, r)
    return None


def _skeleton(tree: DecoratedTree) -> tuple:
    return (tree.label, tree.conj, tuple(sorted(_skeleton(c) for c in tree.children)))


def _skeleton_factor(skel: tuple) -> int:
    _, _, kids = skel
    out = 1
    for child, beta in Counter(kids).items():
        out *= _skeleton_factor(child) ** beta * math.factorial(beta)
    return out


def symmetry_factor(obj: TreeOrForest) -> int:
    """Symmetry factor of the edge-decorated skeleton (node data ignored).

    For a forest the trees are grouped the same way as the children of a node.
    """
    forest = as_forest(obj)
    return _skeleton_factor(("", 0, tuple(sorted(_skeleton(t) for t in forest))))


# -- elementary differentials ----------------------------------------------------


@dataclass(frozen=True)
class Upsilon:
    """Scalar times a product of initial-data factors v_f (bar=0) or conj(v_f) (bar=1)."""

    scalar: sympy.Expr
    factors: tuple[tuple[LinearFrequency, int], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "factors", tuple(sorted(self.factors)))

    def __mul__(self, other: "Upsilon") -> "Upsilon":
        return Upsilon(self.scalar * other.scalar, self.factors + other.factors)

    def conjugate(self) -> "Upsilon":
        return Upsilon(sympy.conjugate(self.scalar), tuple((f, 1 - b) for f, b in self.factors))

    def substitute(self, mapping: Mapping[int, LinearFrequency]) -> "Upsilon":
        return Upsilon(self.scalar, tuple((f.substitute(mapping), b) for f, b in self.factors))

    def evaluate(self, profile: Callable[[Any], complex], values: Mapping[int, Any]) -> complex:
        out = complex(self.scalar)
        for f, bar in self.factors:
            val = profile(f.evaluate(values))
            out *= val.conjugate() if bar else val
        return out

    def __str__(self) -> str:
        parts = [f"v{'bar' if b else ''}[{f}]" for f, b in self.factors]
        return f"({self.scalar})*" + "*".join(parts) if parts else str(self.scalar)


UNIT_UPSILON = Upsilon(sympy.Integer(1), ())


def upsilon(tree: DecoratedTree, spec: DispersionSpec) -> Upsilon:
    """Coefficient of the Duhamel iterate encoded by ``tree``."""
    if spec.is_integrator(tree.label):
        raise ValueError("elementary differentials are defined on non-integrator edges")
    if tree.is_leaf:
        return Upsilon(sympy.Integer(1), ((tree.freq, tree.conj),))
    if len(tree.children) != 1 or not spec.is_integrator(tree.children[0].label):
        raise ValueError("a non-leaf tree must carry exactly one integrator child")
    inner = tree.children[0]
    if inner.conj != tree.conj:
        raise ValueError("integrator and outer edge must share the conjugation bit")
    plain = sum(1 for c in inner.children if c.conj == 0)
    bars = len(inner.children) - plain
    want_plain, want_bars = spec.arity(tree.conj)
    if plain > want_plain or bars > want_bars:
        raise ValueError(f"inner node arity ({plain},{bars}) exceeds ({want_plain},{want_bars})")
    if (plain, bars) != (want_plain, want_bars):
        raise ValueError(f"inner node arity ({plain},{bars}) differs from ({want_plain},{want_bars})")
    scale = spec.prefactor if tree.conj == 0 else sympy.conjugate(spec.prefactor)
    out = Upsilon(scale * math.factorial(plain) * math.factorial(bars), ())
    for child in inner.children:
        out = out * upsilon(child, spec)
    return out


def leaf_count(obj: TreeOrForest) -> int:
    return sum(len(t.leaves()) for t in as_forest(obj))


def iter_trees(objs: Iterable[TreeOrForest]) -> Iterator[DecoratedTree]:
    for obj in objs:
        yield from as_forest(obj)
