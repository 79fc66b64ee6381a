"""Duhamel tree sets, Wick pairings and paired-forest classes."""

from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

from .trees import (
    K_SYMBOL,
    DecoratedTree,
    DispersionSpec,
    LinearFrequency,
    n_plus,
)

REAL = "real-gaussian"
COMPLEX = "complex-gaussian"
NOISE_MODES = (REAL, COMPLEX)
SUPPORTED_ORDERS = (0, 1)

ZERO = LinearFrequency()


# -- tree sets -----------------------------------------------------------------


def _shapes(spec: DispersionSpec, conj: int, budget: int) -> list[DecoratedTree]:
    """All skeletons with at most ``budget`` integrator edges, frequencies zeroed."""
    out = [DecoratedTree(spec.linear_label, conj, ZERO)]
    if budget < 1:
        return out
    plain, bars = spec.arity(conj)
    pool = {c: _shapes(spec, c, budget - 1) for c in (0, 1)}
    for first in itertools.combinations_with_replacement(pool[0], plain):
        for second in itertools.combinations_with_replacement(pool[1], bars):
            kids = first + second
            if sum(n_plus(t, spec) for t in kids) > budget - 1:
                continue
            inner = DecoratedTree(spec.integrator_label, conj, ZERO, 0, kids)
            out.append(DecoratedTree(spec.linear_label, conj, ZERO, 0, (inner,)))
    return out


def _assign(tree: DecoratedTree, counter: itertools.count) -> DecoratedTree:
    """Fresh leaf symbols in depth-first order; inner nodes follow Kirchhoff's law."""
    if tree.is_leaf:
        return DecoratedTree(tree.label, tree.conj, LinearFrequency.symbol(next(counter)), tree.ell)
    kids = tuple(_assign(c, counter) for c in tree.children)
    total = ZERO
    for child in kids:
        total = total + child.freq.signed(child.conj)
    return DecoratedTree(tree.label, tree.conj, total.signed(tree.conj), tree.ell, kids)


def leaf_form(shape: DecoratedTree, start: int = 1) -> DecoratedTree:
    """Leaves carry the symbols start, start+1, ...; inner frequencies derived."""
    return _assign(shape, itertools.count(start))


def _ordered_leaves(tree: DecoratedTree) -> list[DecoratedTree]:
    return sorted(tree.leaves(), key=lambda t: t.freq.symbols())


def _renumber(tree: DecoratedTree) -> DecoratedTree:
    used = sorted(tree.symbols() - {K_SYMBOL})
    mapping = {old: new for new, old in enumerate(used, start=1)}
    return tree.map_freq(lambda f: f.rename(mapping))


def _shape_order(tree: DecoratedTree, spec: DispersionSpec) -> tuple[int, str]:
    return (n_plus(tree, spec), tree.encoding)


def duhamel_shapes(spec: DispersionSpec, r: int) -> list[DecoratedTree]:
    if r not in SUPPORTED_ORDERS:
        raise ValueError(f"order r={r} outside the supported range {SUPPORTED_ORDERS}")
    shapes = _shapes(spec, 0, r + 1)
    return sorted(shapes, key=lambda t: _shape_order(t, spec))


def duhamel_trees(spec: DispersionSpec, r: int) -> list[DecoratedTree]:
    """Trees of the Duhamel expansion with root-adjacent frequency k."""
    out = []
    for shape in duhamel_shapes(spec, r):
        tree = leaf_form(shape)
        root = tree.freq
        pivot = max(root.symbols())
        c = root.coefficient(pivot)
        rest = root - LinearFrequency.symbol(pivot, c)
        solved = LinearFrequency.symbol(K_SYMBOL, c) - LinearFrequency(tuple((i, c * d) for i, d in rest.coeffs))
        out.append(_renumber(tree.substitute({pivot: solved})))
    return out


# -- Wick pairings -------------------------------------------------------------


@dataclass(frozen=True)
class WickLeaf:
    """A leaf seen by the Gaussian expectation; side 0 is the conjugated tree."""

    freq: LinearFrequency
    conj: int
    side: int

    @property
    def bar(self) -> int:
        """1 when the leaf contributes conj(eta), 0 for eta."""
        return self.conj ^ (1 if self.side == 0 else 0)


Matching = tuple[tuple[int, int], ...]


def wick_pairings(leaves: Sequence[object]) -> list[Matching]:
    """All perfect matchings of the index set of ``leaves``."""
    n = len(leaves)
    if n % 2:
        return []
    return list(_matchings(tuple(range(n))))


def _matchings(items: tuple[int, ...]) -> Iterable[Matching]:
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for j, partner in enumerate(rest):
        remaining = rest[:j] + rest[j + 1 :]
        for tail in _matchings(remaining):
            yield ((first, partner),) + tail


def pair_delta(a: WickLeaf, b: WickLeaf) -> LinearFrequency:
    """Linear form forced to vanish by the expectation of the two Gaussians."""
    return a.freq.signed(a.bar) + b.freq.signed(b.bar)


def same_sign(a: WickLeaf, b: WickLeaf) -> bool:
    return a.bar == b.bar


# -- delta resolution ----------------------------------------------------------


class DegenerateMatching(Exception):
    """The constraints force the external frequency to vanish."""


def solve_constraints(equations: Iterable[LinearFrequency]) -> dict[int, LinearFrequency]:
    """Gaussian elimination eliminating the highest-indexed symbols first.

    Returns a substitution expressing bound symbols through the free ones.
    """
    subst: dict[int, LinearFrequency] = {}
    for eq in equations:
        reduced = eq.substitute(subst)
        if reduced.is_zero:
            continue
        candidates = [i for i, c in reduced.coeffs if abs(c) == 1 and i != K_SYMBOL]
        if not candidates:
            if reduced.symbols() == (K_SYMBOL,):
                raise DegenerateMatching(str(eq))
            raise ValueError(f"constraint {reduced} is not unimodular")
        pivot = max(candidates)
        c = reduced.coefficient(pivot)
        rest = reduced - LinearFrequency.symbol(pivot, c)
        value = LinearFrequency(tuple((i, -c * d) for i, d in rest.coeffs))
        subst = {s: f.substitute({pivot: value}) for s, f in subst.items()}
        subst[pivot] = value
    return subst


# -- paired forests ------------------------------------------------------------


@dataclass(frozen=True)
class PairedForest:
    """Two trees (left one conjugated) after resolving a Wick matching."""

    left: DecoratedTree
    right: DecoratedTree
    matching: Matching
    substitution: tuple[tuple[int, LinearFrequency], ...]
    free_symbols: tuple[int, ...]
    same_sign: bool = False
    signature: tuple = ()

    @property
    def trees(self) -> tuple[DecoratedTree, DecoratedTree]:
        return (self.left, self.right)

    def mirror(self) -> "PairedForest":
        return replace(self, left=self.right, right=self.left)

    def to_json(self) -> dict:
        return {
            "left": self.left.to_json(),
            "right": self.right.to_json(),
            "matching": [list(p) for p in self.matching],
            "substitution": {str(i): str(f) for i, f in self.substitution},
            "free_symbols": list(self.free_symbols),
        }


@dataclass(frozen=True)
class PairingClass:
    representative: PairedForest
    multiplicity: int
    members: tuple[PairedForest, ...]
    tree_pair: tuple[int, int]

    def to_json(self) -> dict:
        out = self.representative.to_json()
        out["multiplicity"] = self.multiplicity
        out["tree_pair"] = list(self.tree_pair)
        return out


def _relabel(pf_left: DecoratedTree, pf_right: DecoratedTree, free: Sequence[int],
             perm: Sequence[int], signs: Sequence[int]) -> tuple[DecoratedTree, DecoratedTree]:
    mapping = {
        old: LinearFrequency.symbol(new, s)
        for old, new, s in zip(free, perm, signs)
    }
    return pf_left.substitute(mapping), pf_right.substitute(mapping)


def _variants(left: DecoratedTree, right: DecoratedTree, free: Sequence[int]):
    targets = list(range(1, len(free) + 1))
    for perm in itertools.permutations(targets):
        for signs in itertools.product((1, -1), repeat=len(free)):
            yield _relabel(left, right, free, perm, signs), perm, signs


def _oriented_key(left: DecoratedTree, right: DecoratedTree, free: Sequence[int]):
    best = None
    for (lt, rt), perm, signs in _variants(left, right, free):
        key = (lt.encoding, rt.encoding)
        if best is None or key < best[0]:
            best = (key, lt, rt, perm, signs)
    assert best is not None
    return best


def _resolve(
    left_form: DecoratedTree,
    right_form: DecoratedTree,
    matching: Matching,
    leaves: Sequence[WickLeaf],
) -> PairedForest:
    k = LinearFrequency.symbol(K_SYMBOL)
    equations = [left_form.freq - k, right_form.freq - k]
    equations += [pair_delta(leaves[a], leaves[b]) for a, b in matching]
    subst = solve_constraints(equations)
    left = left_form.substitute(subst)
    right = right_form.substitute(subst)
    free = sorted((left.symbols() | right.symbols()) - {K_SYMBOL})
    key, lt, rt, perm, signs = _oriented_key(left, right, free)
    rename = {old: LinearFrequency.symbol(new, s) for old, new, s in zip(free, perm, signs)}
    full = {
        sym: LinearFrequency.symbol(sym).substitute(subst).substitute(rename)
        for sym in sorted(left_form.symbols() | right_form.symbols())
        if sym != K_SYMBOL
    }
    return PairedForest(
        left=lt,
        right=rt,
        matching=matching,
        substitution=tuple(sorted(full.items())),
        free_symbols=tuple(range(1, len(free) + 1)),
        same_sign=any(same_sign(leaves[a], leaves[b]) for a, b in matching),
        signature=pairing_signature(left_form, right_form, matching, leaves),
    )


def _cherry_of(tree: DecoratedTree, side: int) -> dict[int, tuple[int, int]]:
    """Leaf symbol -> (side, node index) for integrals fed by leaves only."""
    out: dict[int, tuple[int, int]] = {}
    for idx, node in enumerate(tree.nodes()):
        if node.children and all(c.is_leaf for c in node.children):
            for c in node.children:
                out[c.freq.symbols()[0]] = (side, idx)
    return out


def _sign_word(a: WickLeaf, b: WickLeaf) -> str:
    return "same" if same_sign(a, b) else "opposite"


def pairing_signature(
    left_form: DecoratedTree, right_form: DecoratedTree, matching: Matching, leaves: Sequence[WickLeaf]
) -> tuple:
    """Coarse type of a matching, used to group the census.

    For every leaf-only integral holding an internal pair, record the sign type
    of that pair and of the pairs leaving the integral from its other leaves.
    Matchings without any internal pair share one signature.
    """
    owner = {**_cherry_of(left_form, 0), **_cherry_of(right_form, 1)}
    where = [owner.get(leaf.freq.symbols()[0]) for leaf in leaves]
    inside: dict[tuple[int, int], list[str]] = defaultdict(list)
    outside: dict[tuple[int, int], list[str]] = defaultdict(list)
    for a, b in matching:
        word = _sign_word(leaves[a], leaves[b])
        if where[a] is not None and where[a] == where[b]:
            inside[where[a]].append(word)
            continue
        for end in (a, b):
            if where[end] is not None:
                outside[where[end]].append(word)
    if not inside:
        return ("external",)
    parts = sorted((tuple(sorted(inside[c])), tuple(sorted(outside[c]))) for c in inside)
    return ("internal", tuple(parts))


def _wick_leaves(left_form: DecoratedTree, right_form: DecoratedTree) -> list[WickLeaf]:
    out = [WickLeaf(t.freq, t.conj, 0) for t in _ordered_leaves(left_form)]
    out += [WickLeaf(t.freq, t.conj, 1) for t in _ordered_leaves(right_form)]
    return out


def enumerate_matchings(
    spec: DispersionSpec, left_shape: DecoratedTree, right_shape: DecoratedTree, mode: str = REAL
) -> tuple[list[PairedForest], int]:
    """Admissible resolved matchings for one ordered pair of shapes.

    Returns the forests and the number of matchings discarded because they
    pin the external frequency to zero.
    """
    if mode not in NOISE_MODES:
        raise ValueError(f"unknown noise mode {mode!r}")
    left_form = leaf_form(left_shape, 1)
    right_form = leaf_form(right_shape, 1 + len(left_form.leaves()))
    leaves = _wick_leaves(left_form, right_form)
    out: list[PairedForest] = []
    degenerate = 0
    for matching in wick_pairings(leaves):
        if mode == COMPLEX and any(same_sign(leaves[a], leaves[b]) for a, b in matching):
            continue
        try:
            out.append(_resolve(left_form, right_form, matching, leaves))
        except DegenerateMatching:
            degenerate += 1
    return out, degenerate


def oriented_key(pf: PairedForest) -> tuple[str, str]:
    return (pf.left.encoding, pf.right.encoding)


def mirror_key(pf: PairedForest) -> tuple[str, str]:
    mirrored = pf.mirror()
    other = _oriented_key(mirrored.left, mirrored.right, pf.free_symbols)[0]
    return min(oriented_key(pf), other)


def _canonical_mirror(pf: PairedForest) -> PairedForest:
    key, lt, rt, _, _ = _oriented_key(pf.right, pf.left, pf.free_symbols)
    if key < oriented_key(pf):
        return replace(pf, left=lt, right=rt)
    return pf


def paired_forest_classes(
    spec: DispersionSpec, r: int, mode: str = REAL
) -> list[PairingClass]:
    """Pairing classes over unordered pairs of Duhamel trees.

    Matchings of one tree pair are grouped by :func:`pairing_signature`. A class
    may hold several distinct exact forests; its value is the sum over members.
    """
    shapes = duhamel_shapes(spec, r)
    classes: list[PairingClass] = []
    for a, b in itertools.combinations_with_replacement(range(len(shapes)), 2):
        if n_plus(shapes[a], spec) + n_plus(shapes[b], spec) > r + 1:
            continue
        forests, _ = enumerate_matchings(spec, shapes[a], shapes[b], mode)
        groups: dict[tuple, list[PairedForest]] = defaultdict(list)
        for pf in forests:
            groups[pf.signature].append(pf)
        for key in sorted(groups, key=lambda g: (len(groups[g]), repr(g))):
            members = groups[key]
            rep = min((_canonical_mirror(m) for m in members), key=oriented_key)
            classes.append(PairingClass(rep, len(members), tuple(members), (a, b)))
    return classes


def oriented_classes(
    spec: DispersionSpec, r: int, mode: str = REAL
) -> list[PairingClass]:
    """Classes over ordered pairs of trees, grouped without the mirror symmetry.

    Summing the value of every member of every oriented class gives the second
    moment directly; mirror images appear as separate classes.
    """
    shapes = duhamel_shapes(spec, r)
    classes: list[PairingClass] = []
    for a, b in itertools.product(range(len(shapes)), repeat=2):
        if n_plus(shapes[a], spec) + n_plus(shapes[b], spec) > r + 1:
            continue
        forests, _ = enumerate_matchings(spec, shapes[a], shapes[b], mode)
        groups: dict[tuple[str, str], list[PairedForest]] = defaultdict(list)
        for pf in forests:
            groups[oriented_key(pf)].append(pf)
        for key in sorted(groups):
            members = groups[key]
            classes.append(PairingClass(members[0], len(members), tuple(members), (a, b)))
    return classes


def complex_case_filter(classes: Sequence[PairingClass], mode: str) -> list[PairingClass]:
    """Keep only matchings built from E(eta conj(eta)) pairs in complex mode."""
    if mode not in NOISE_MODES:
        raise ValueError(f"unknown noise mode {mode!r}")
    if mode == REAL:
        return list(classes)
    out = []
    for cls in classes:
        kept = tuple(m for m in cls.members if not m.same_sign)
        if kept:
            rep = cls.representative if not cls.representative.same_sign else kept[0]
            out.append(PairingClass(rep, len(kept), kept, cls.tree_pair))
    return out


def degenerate_count(spec: DispersionSpec, r: int, mode: str = REAL) -> int:
    """Matchings dropped because they only contribute at k = 0."""
    shapes = duhamel_shapes(spec, r)
    total = 0
    for a, b in itertools.combinations_with_replacement(range(len(shapes)), 2):
        if n_plus(shapes[a], spec) + n_plus(shapes[b], spec) > r + 1:
            continue
        total += enumerate_matchings(spec, shapes[a], shapes[b], mode)[1]
    return total


def find_class(classes: Sequence[PairingClass], pf: PairedForest) -> Optional[PairingClass]:
    """The class holding a forest equal to ``pf`` up to renaming and mirroring."""
    key = mirror_key(pf)
    for cls in classes:
        if any(mirror_key(m) == key for m in cls.members):
            return cls
    return None
