"""CP, hierarchical, generalized, and mixed tensor generators."""

import itertools

import numpy as np
import pytest

from circuitrank import (
    ARITHMETIC,
    MixedParams,
    OperatorSpec,
    Partition,
    all_mode_partitions,
    cp_generate,
    dilation_tree,
    even_odd_partition,
    generalized_generate,
    hierarchical_generate,
    matricize,
    mixed_generate,
    numerical_rank,
    one_hot_selector_params,
    perfect_binary_tree,
    sample_cp_params,
    sample_hierarchical_params,
    sample_mixed_params,
    uniform_widths,
)
from circuitrank.generators import CpParams, HierarchicalParams

RELU_MAX = OperatorSpec("relu", "max")
TOL = 1e-12


class TestCpGenerate:
    def test_single_one_hot_term(self):
        p = CpParams(order=3, vectors=np.array([[1.0, 0.0]]), weights=np.array([5.0]))
        t = cp_generate(p)
        expected = np.zeros((2, 2, 2))
        expected[0, 0, 0] = 5.0
        assert np.array_equal(t.data, expected)

    def test_symmetric_under_mode_permutations(self):
        p = sample_cp_params(4, 2, 3, seed=0)
        t = cp_generate(p).data
        for perm in itertools.permutations(range(4)):
            assert np.max(np.abs(np.transpose(t, perm) - t)) < 1e-12

    @pytest.mark.parametrize("seed", range(5))
    def test_rank_bounded_by_terms_all_partitions(self, seed):
        """Every matricization of an r-term model has rank at most r."""
        r0 = 3
        t = cp_generate(sample_cp_params(6, 2, r0, seed))
        for p in all_mode_partitions(6):
            assert numerical_rank(matricize(t, p), TOL) <= r0

    def test_entry_oracle(self):
        """Brute-force the defining sum entry by entry."""
        p = sample_cp_params(3, 2, 2, seed=7)
        t = cp_generate(p)
        for idx in itertools.product(range(2), repeat=3):
            expected = sum(
                p.weights[g] * np.prod([p.vectors[g][d] for d in idx])
                for g in range(p.num_terms)
            )
            assert t.data[idx] == pytest.approx(expected, rel=1e-12)

    def test_shape_validation(self):
        with pytest.raises(ValueError, match="weights"):
            CpParams(order=2, vectors=np.ones((2, 3)), weights=np.ones(3))


class TestHierarchicalGenerate:
    def test_order2_rank_bounded_by_root_width(self):
        tree = perfect_binary_tree(2)
        for width, seed in [(1, 0), (2, 1), (3, 2)]:
            params = sample_hierarchical_params(tree, 3, width, seed)
            t = hierarchical_generate(params)
            assert t.mode_lengths == (3, 3)
            assert numerical_rank(t.data, TOL) <= width

    def test_one_hot_selectors_give_rank_one(self):
        params = one_hot_selector_params(perfect_binary_tree(8), 2, 1)
        t = hierarchical_generate(params)
        expected = np.zeros((2,) * 8)
        expected[(0,) * 8] = 1.0
        assert np.array_equal(t.data, expected)
        assert numerical_rank(matricize(t, even_odd_partition(8)), TOL) == 1

    def test_even_odd_rank_hits_ceiling(self):
        """Random draws reach the maximal even-odd rank M**(N/2)."""
        tree = perfect_binary_tree(8)
        p = even_odd_partition(8)
        hits = 0
        for seed in range(20):
            t = hierarchical_generate(sample_hierarchical_params(tree, 2, 2, seed))
            if numerical_rank(matricize(t, p), TOL) == 16:
                hits += 1
        assert hits >= 19

    def test_wide_enough_widths_achieve_max_n4(self):
        tree = perfect_binary_tree(4)
        p = even_odd_partition(4)
        params = sample_hierarchical_params(tree, 2, 4, seed=3)
        assert numerical_rank(matricize(hierarchical_generate(params), p), TOL) == 4

    def test_entry_oracle_n4(self):
        """Recompute one generated tensor by explicit summation."""
        tree = perfect_binary_tree(4)
        params = sample_hierarchical_params(tree, 2, 2, seed=5)
        t = hierarchical_generate(params).data

        left = tree.children[0].modes
        right = tree.children[1].modes
        cl = params.coefficients[left]
        cr = params.coefficients[right]
        croot = params.coefficients[tree.modes]
        out = params.output_weights
        m = 2

        def pair_channel(coeffs, c, d1, d2):
            u = coeffs[0][c]
            v = coeffs[1][c]
            return u[d1] * v[d2]

        for idx in itertools.product(range(m), repeat=4):
            total = 0.0
            for c in range(2):
                lmix = sum(croot[0][c, g] * pair_channel(cl, g, idx[0], idx[1])
                           for g in range(2))
                rmix = sum(croot[1][c, g] * pair_channel(cr, g, idx[2], idx[3])
                           for g in range(2))
                total += out[c] * lmix * rmix
            assert t[idx] == pytest.approx(total, rel=1e-10, abs=1e-12)

    def test_missing_width_rejected(self):
        tree = perfect_binary_tree(4)
        widths = uniform_widths(tree, 2)
        del widths[tree.modes]
        with pytest.raises(ValueError, match="width"):
            sample_hierarchical_params(tree, 2, widths, 0)

    def test_coefficient_shape_rejected(self):
        tree = perfect_binary_tree(2)
        with pytest.raises(ValueError, match="shape"):
            HierarchicalParams(tree, 2, {tree.modes: 2},
                               {tree.modes: (np.ones((2, 3)), np.ones((2, 2)))},
                               np.ones(2))


class TestGeneralizedGenerate:
    @pytest.mark.parametrize("n,m,width", [(2, 2, 1), (4, 2, 2), (8, 3, 2)])
    def test_identity_product_matches_plain_bitwise(self, n, m, width):
        params = sample_hierarchical_params(perfect_binary_tree(n), m, width, seed=n)
        plain = hierarchical_generate(params)
        general = generalized_generate(params, ARITHMETIC)
        assert np.array_equal(plain.data, general.data)

    def test_relu_max_selector_is_max_of_indicators(self):
        """One-hot selectors under (relu, max) give the any-position-hit tensor."""
        tree = perfect_binary_tree(4)
        params = one_hot_selector_params(tree, 2, 2)
        t = generalized_generate(params, RELU_MAX).data
        for idx in itertools.product(range(2), repeat=4):
            assert t[idx] == (1.0 if any(d == 1 for d in idx) else 0.0)

    def test_relu_max_selector_low_rank(self):
        params = one_hot_selector_params(perfect_binary_tree(8), 2, 1)
        t = generalized_generate(params, RELU_MAX)
        assert numerical_rank(matricize(t, even_odd_partition(8)), TOL) <= 2

    def test_relu_average(self):
        tree = perfect_binary_tree(2)
        params = one_hot_selector_params(tree, 2, 1)
        t = generalized_generate(params, OperatorSpec("relu", "average")).data
        assert t[0, 0] == 1.0
        assert t[0, 1] == 0.5
        assert t[1, 1] == 0.0


class TestSampling:
    def test_same_seed_identical(self):
        tree = perfect_binary_tree(4)
        a = sample_hierarchical_params(tree, 2, 2, seed=42)
        b = sample_hierarchical_params(tree, 2, 2, seed=42)
        assert np.array_equal(a.output_weights, b.output_weights)
        for key in a.coefficients:
            for x, y in zip(a.coefficients[key], b.coefficients[key]):
                assert np.array_equal(x, y)

    def test_distinct_seeds_differ(self):
        tree = perfect_binary_tree(4)
        a = sample_hierarchical_params(tree, 2, 2, seed=1)
        b = sample_hierarchical_params(tree, 2, 2, seed=2)
        assert not np.array_equal(a.output_weights, b.output_weights)

    def test_cp_seeding(self):
        assert np.array_equal(sample_cp_params(4, 2, 3, 5).vectors,
                              sample_cp_params(4, 2, 3, 5).vectors)

    def test_hierarchical_json_round_trip(self):
        params = sample_hierarchical_params(perfect_binary_tree(4), 2, 2, seed=8)
        back = HierarchicalParams.from_json_dict(params.to_json_dict(seed=8))
        assert np.array_equal(hierarchical_generate(back).data,
                              hierarchical_generate(params).data)


class TestMixedGenerate:
    def trees(self):
        return dilation_tree(8), dilation_tree(8, (2, 1, 3))

    def test_empty_exchange_zero_right_reduces_to_left(self):
        t1, t2 = self.trees()
        left = sample_hierarchical_params(t1, 2, 2, seed=0)
        right = sample_hierarchical_params(t2, 2, 2, seed=1)
        zeroed = HierarchicalParams(right.tree, 2, right.widths, right.coefficients,
                                    np.zeros_like(right.output_weights))
        mixed = mixed_generate(MixedParams(left, zeroed, {}))
        assert np.array_equal(mixed.data, hierarchical_generate(left).data)

    def test_leaves_exchange_identical_sides_folds_to_single_tree(self):
        """Identity-concatenation at the leaves is a reparameterized single tree.

        With both sides sharing tree and parameters, folding each doubled
        leaf-mix vector back to length M and doubling the output weights
        reproduces the mixture entrywise.
        """
        tree = perfect_binary_tree(4)
        m = 2
        params = sample_hierarchical_params(
            tree, m, 2, seed=3,
            exchanged_child_widths={frozenset({i}): 2 * m for i in range(1, 5)})
        exchanges = {frozenset({i}): np.eye(2 * m) for i in range(1, 5)}
        mixed = mixed_generate(MixedParams(params, params, exchanges))

        folded_coeffs = {}
        for key, arrays in params.coefficients.items():
            node_arrays = []
            for arr in arrays:
                if arr.shape[1] == 2 * m:
                    node_arrays.append(arr[:, :m] + arr[:, m:])
                else:
                    node_arrays.append(arr)
            folded_coeffs[key] = tuple(node_arrays)
        folded = HierarchicalParams(tree, m, params.widths, folded_coeffs,
                                    2.0 * params.output_weights)
        single = hierarchical_generate(folded)
        assert np.max(np.abs(mixed.data - single.data)) < 1e-12

    def test_exchange_absent_from_tree_rejected(self):
        t1, t2 = self.trees()
        left = sample_hierarchical_params(
            t1, 2, 2, seed=0,
            exchanged_child_widths={frozenset({1, 2}): 4})
        right = sample_hierarchical_params(
            t2, 2, 2, seed=1,
            exchanged_child_widths={frozenset({1, 2}): 4})
        with pytest.raises(ValueError, match="absent"):
            MixedParams(left, right, {frozenset({1, 2}): np.ones((4, 4))})

    def test_sampled_mixture_generates(self):
        t1, t2 = self.trees()
        params = sample_mixed_params(t1, t2, 2, 2, seed=11)
        t = mixed_generate(params)
        assert t.mode_lengths == (2,) * 8

    def test_mixture_can_exceed_single_trees_on_halves(self):
        """Exchanged quad channels push the contiguous-halves rank past the
        width-2 ceiling of either tree alone."""
        t1, t2 = self.trees()
        p = Partition.from_left(8, [1, 2, 3, 4])
        best = 0
        for seed in range(10):
            t = mixed_generate(sample_mixed_params(t1, t2, 2, 2, seed))
            best = max(best, numerical_rank(matricize(t, p), TOL))
        assert best > 2
