from __future__ import annotations

import itertools
from collections import Counter, defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowreg_moments.forests import (
    COMPLEX,
    REAL,
    WickLeaf,
    complex_case_filter,
    degenerate_count,
    duhamel_shapes,
    duhamel_trees,
    enumerate_matchings,
    find_class,
    pair_delta,
    oriented_classes,
    paired_forest_classes,
    solve_constraints,
    wick_pairings,
)
from lowreg_moments.oscillatory import eval_pi, paired_exact
from lowreg_moments.trees import KDV, NLS, LinearFrequency, kirchhoff_valid, n_plus, symmetry_factor, upsilon

from oracles import gaussian_moment_by_tree_pair

K = LinearFrequency.symbol(0)


def by_pair(classes):
    out = defaultdict(list)
    for c in classes:
        out[c.tree_pair].append(c.multiplicity)
    return {p: sorted(m) for p, m in out.items()}


class TestDuhamelTrees:
    def test_nls_first_order(self):
        assert len(duhamel_trees(NLS, 0)) == 2

    def test_nls_second_order(self):
        trees = duhamel_trees(NLS, 1)
        assert len(trees) == 4
        assert [n_plus(t, NLS) for t in trees] == [0, 1, 2, 2]

    def test_kdv_first_order(self):
        assert len(duhamel_trees(KDV, 0)) == 2

    def test_unsupported_order(self):
        with pytest.raises(ValueError):
            duhamel_trees(NLS, 2)

    def test_root_frequency_is_k(self):
        for t in duhamel_trees(NLS, 1):
            assert t.freq == K


class TestWick:
    @pytest.mark.parametrize("n, count", [(0, 1), (2, 1), (4, 3), (6, 15), (8, 105)])
    def test_double_factorial(self, n, count):
        assert len(wick_pairings(list(range(n)))) == count

    def test_odd_is_empty(self):
        assert wick_pairings([0, 1, 2]) == []

    def test_kdv_cross_term_has_no_pairing(self):
        # leaf against a quadratic tree: three Gaussians
        T0, T1 = duhamel_trees(KDV, 0)
        forests, _ = enumerate_matchings(KDV, T0, T1, REAL)
        assert forests == []

    def test_nls_first_order_deltas(self):
        # E(conj(eta_k) conj(eta_k1) eta_k2 eta_k3): the three delta products
        leaves = [
            WickLeaf(LinearFrequency.symbol(0), 0, 0),
            WickLeaf(LinearFrequency.symbol(1), 0, 0),
            WickLeaf(LinearFrequency.symbol(2), 0, 1),
            WickLeaf(LinearFrequency.symbol(3), 0, 1),
        ]
        deltas = {frozenset(str(pair_delta(leaves[a], leaves[b])) for a, b in m) for m in wick_pairings(leaves)}
        assert deltas == {
            frozenset({"-k - k1", "k2 + k3"}),
            frozenset({"-k + k2", "-k1 + k3"}),
            frozenset({"-k + k3", "-k1 + k2"}),
        }


class TestCensus:
    def test_nls_r0(self):
        classes = paired_forest_classes(NLS, 0)
        assert [c.multiplicity for c in classes] == [1, 1, 2]

    def test_nls_r1(self):
        classes = paired_forest_classes(NLS, 1)
        assert len(classes) == 17
        assert by_pair(classes) == {
            (0, 0): [1],
            (0, 1): [1, 2],
            (0, 2): [1, 2, 2, 4, 6],
            (0, 3): [1, 2, 2, 4, 6],
            (1, 1): [1, 4, 4, 6],
        }
        assert Counter(c.multiplicity for c in classes[3:]) == Counter({6: 3, 2: 4, 1: 3, 4: 4})

    def test_kdv_r0(self):
        assert [c.multiplicity for c in paired_forest_classes(KDV, 0)] == [1]

    def test_kdv_r1(self):
        classes = paired_forest_classes(KDV, 1)
        assert sorted(c.multiplicity for c in classes) == [1, 1, 2, 2]
        assert by_pair(classes) == {(0, 0): [1], (0, 2): [1, 2], (1, 1): [2]}
        assert degenerate_count(KDV, 1) == 1

    @pytest.mark.parametrize("spec, r", [(NLS, 0), (NLS, 1), (KDV, 1)])
    def test_multiplicities_sum_to_matchings(self, spec, r):
        shapes = duhamel_shapes(spec, r)
        total = 0
        for a, b in itertools.combinations_with_replacement(range(len(shapes)), 2):
            if n_plus(shapes[a], spec) + n_plus(shapes[b], spec) <= r + 1:
                total += len(enumerate_matchings(spec, shapes[a], shapes[b], REAL)[0])
        assert sum(c.multiplicity for c in paired_forest_classes(spec, r)) == total

    @pytest.mark.parametrize("spec, r", [(NLS, 1), (KDV, 1)])
    def test_pairing_invariants(self, spec, r):
        for c in oriented_classes(spec, r):
            for pf in c.members:
                assert pf.left.freq == pf.right.freq == K
                assert kirchhoff_valid(pf.left) and kirchhoff_valid(pf.right)
                assert (pf.left.symbols() | pf.right.symbols()) <= {0, *pf.free_symbols}

    @pytest.mark.parametrize("spec, r", [(NLS, 1), (KDV, 1)])
    def test_representatives_are_members_up_to_mirror(self, spec, r):
        classes = paired_forest_classes(spec, r)
        for c in classes:
            assert find_class(classes, c.representative) is c


class TestComplexMode:
    def test_nls_r0_drops_same_sign_class(self):
        real = paired_forest_classes(NLS, 0, REAL)
        cplx = complex_case_filter(real, COMPLEX)
        assert len(real) == 3 and len(cplx) == 2
        assert sorted(c.multiplicity for c in cplx) == [1, 2]

    def test_real_mode_identity(self):
        real = paired_forest_classes(NLS, 1, REAL)
        assert complex_case_filter(real, REAL) == real

    def test_kdv_complex_has_no_same_sign_pairs(self):
        cplx = paired_forest_classes(KDV, 1, COMPLEX)
        assert all(not m.same_sign for c in cplx for m in c.members)
        # only the leaf-leaf class and the T1.T1 pairing without internal pairs survive
        assert sorted(c.multiplicity for c in cplx) == [1, 2]

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            complex_case_filter([], "uniform")


class TestConstraints:
    def test_elimination_prefers_high_symbols(self):
        eqs = [LinearFrequency(((1, 1), (2, -1))), LinearFrequency(((0, -1), (3, 1)))]
        subst = solve_constraints(eqs)
        assert subst == {2: LinearFrequency.symbol(1), 3: LinearFrequency.symbol(0)}


def _class_sums(spec, r, mode, v, k, tau):
    prof = lambda q: v.get(int(q), 0)
    out = defaultdict(complex)
    for c in oriented_classes(spec, r, mode):
        for pf in c.members:
            up = upsilon(pf.left, spec).conjugate() * upsilon(pf.right, spec)
            S = symmetry_factor(pf.left) * symmetry_factor(pf.right)
            for combo in itertools.product(range(-6, 7), repeat=len(pf.free_symbols)):
                vals = {0: k, **dict(zip(pf.free_symbols, combo))}
                amp = up.evaluate(prof, vals)
                if amp != 0:
                    out[c.tree_pair] += amp / S * paired_exact(pf.left, pf.right, vals, spec)(tau)
    return out


def _profile(mode, seed):
    rng = np.random.default_rng(seed)
    v = {q: complex(rng.normal(), rng.normal()) * 0.6 for q in (-2, -1, 0, 1, 2)}
    if mode == REAL:
        v[0] = v[0].real
        for q in (1, 2):
            v[-q] = np.conj(v[q])
    return v


def _pi(T, vals, spec, tau):
    return eval_pi(T, vals, spec)(tau)


@pytest.mark.parametrize(
    "spec, r, mode", [(NLS, 0, REAL), (NLS, 1, REAL), (NLS, 1, COMPLEX), (KDV, 1, REAL), (KDV, 1, COMPLEX)]
)
def test_pairing_sums_match_gaussian_expansion(spec, r, mode):
    """Wick enumeration against brute-force expansion in eta with exact Gaussian moments."""
    v = _profile(mode, 3)
    brute = gaussian_moment_by_tree_pair(spec, r, mode, v, 1, 0.3, _pi)
    wick = _class_sums(spec, r, mode, v, 1, 0.3)
    for pair, val in brute.items():
        assert abs(wick.get(pair, 0) - val) < 1e-10 * max(1.0, abs(val)), pair


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(-2, 2))
def test_kdv_moment_matches_expansion_for_random_profiles(seed, k):
    v = _profile(REAL, seed)
    brute = gaussian_moment_by_tree_pair(KDV, 1, REAL, v, k, 0.2, _pi)
    wick = _class_sums(KDV, 1, REAL, v, k, 0.2)
    if k == 0:
        # k = 0 also collects the dropped degenerate matchings
        return
    assert abs(sum(brute.values()) - sum(wick.values())) < 1e-10
