"""Experiment-level behavior: aggregates, bounds, and determinism."""

import numpy as np
import pytest

from circuitrank import (
    Partition,
    all_mode_partitions,
    baseline_schedule,
    contiguous_halves_partition,
    cp_generate,
    deep_circuit,
    depth_efficiency_experiment,
    even_odd_partition,
    hierarchical_generate,
    min_cut_verification,
    mixture_experiment,
    outer_product,
    overlap_experiment,
    perfect_binary_tree,
    pooling_geometry_experiment,
    rank_spectrum,
    rank_spectrum_experiment,
    sample_cp_params,
    sample_hierarchical_params,
    separation_rank,
    width_advice_experiment,
    window_splitting_partition,
)
from circuitrank.circuits import CircuitSpec
from circuitrank.experiments import EXPERIMENT_RANK_TOL
from circuitrank.tensor import ARITHMETIC, DenseTensor


class TestRankSpectrum:
    def test_rank_one_tensor_everywhere(self):
        """A product of four vectors has rank 1 under every partition."""
        rng = np.random.default_rng(0)
        t = DenseTensor(rng.standard_normal(2))
        for _ in range(3):
            t = outer_product(t, DenseTensor(rng.standard_normal(2)))
        report = rank_spectrum(t, all_mode_partitions(4))
        assert all(r["rank"] == 1 for r in report.records)

    def test_cp_bound_all_partitions(self):
        t = cp_generate(sample_cp_params(6, 2, 3, seed=1))
        report = rank_spectrum(t, all_mode_partitions(6), EXPERIMENT_RANK_TOL)
        assert all(r["rank"] <= 3 for r in report.records)

    def test_deep_even_odd_vs_halves(self):
        params = sample_hierarchical_params(perfect_binary_tree(8), 2, 2, seed=2)
        t = hierarchical_generate(params)
        report = rank_spectrum(t, [even_odd_partition(8),
                                   contiguous_halves_partition(8)],
                               EXPERIMENT_RANK_TOL)
        assert report.records[0]["rank"] == 16
        assert report.records[1]["rank"] <= 2

    def test_json_shape(self):
        t = cp_generate(sample_cp_params(4, 2, 2, seed=3))
        obj = rank_spectrum(t, [even_odd_partition(4)], descriptor="cp").to_json_dict()
        assert obj["descriptor"] == "cp"
        assert obj["records"][0]["shape"] == [4, 4]


class TestSeparationRank:
    def test_separable_circuit_rank_one(self):
        """Root width 1 makes the function a product across the root split."""
        c = deep_circuit(4, 2, (2, 1), seed=0)
        assert separation_rank(c, contiguous_halves_partition(4)) == 1

    def test_two_separable_summands(self):
        c = deep_circuit(4, 2, (2, 2), seed=0)
        assert separation_rank(c, contiguous_halves_partition(4)) <= 2

    def test_deep_window_splitting_exponential(self):
        best = 0
        for seed in range(5):
            c = deep_circuit(8, 2, 2, seed)
            best = max(best, separation_rank(
                c, window_splitting_partition(baseline_schedule(8), 1),
                EXPERIMENT_RANK_TOL))
        assert best == 16


class TestDepthEfficiency:
    def test_n8_reaches_ceiling(self):
        r = depth_efficiency_experiment(8, 2, 2, draws=30, seed=7)
        assert r["ceiling"] == 16
        assert r["fraction_at_ceiling"] >= 0.95
        assert r["implied_shallow_channels"] == 16

    def test_n2_boundary(self):
        """Order 2: the rank is capped by min(mode length, width)."""
        r = depth_efficiency_experiment(2, 3, 2, draws=20, seed=1)
        assert r["max_rank"] == 2
        assert r["fraction_at_max"] == 1.0

    def test_rectifier_demo_included(self):
        r = depth_efficiency_experiment(8, 2, 2, draws=5, seed=2,
                                        include_rectifier_demo=True)
        demo = r["rectifier_low_rank_instance"]
        assert demo["rank"] <= 2
        assert demo["shallow_channels_needed"] <= 2


class TestPoolingGeometry:
    def test_split_high_halves_low(self):
        r = pooling_geometry_experiment(8, 2, 2, draws=50, seed=11)
        assert r["fraction_split_at_ceiling"] >= 0.98
        assert r["max_halves_rank"] <= 2
        assert r["halves_within_bound"]


class TestOverlap:
    def test_overlap_beats_ceiling_and_reduction_holds(self):
        r = overlap_experiment(8, 2, 2, draws=20, seed=5)
        assert r["nonoverlapping_ceiling"] == 2
        assert r["exceeds_ceiling"]
        assert r["reduction_entrywise"]
        assert r["reduction_max_abs_diff"] < 1e-12


class TestMinCutVerification:
    def test_small_suite(self):
        parts = [even_odd_partition(4), contiguous_halves_partition(4),
                 Partition.from_left(4, [1, 4])]
        r = min_cut_verification(4, 2, 2, parts, draws=60, seed=9)
        assert r["all_matched"]
        for rec in r["records"]:
            assert rec["solver_matches_enumeration"]
            assert rec["max_equals_cut"]
            assert rec["all_draws_within_cut"]

    def test_width_one_degenerate(self):
        parts = [even_odd_partition(4)]
        r = min_cut_verification(4, 2, 1, parts, draws=10, seed=0)
        assert r["records"][0]["min_cut"] == 1
        assert r["records"][0]["max_rank"] == 1


class TestWidthAdvice:
    def test_wrapper_includes_sizes(self):
        r = width_advice_experiment(8, 2, 6, [contiguous_halves_partition(8)])
        assert r["n"] == 8 and r["budget"] == 6
        assert len(r["widths"]) == 3


class TestMixture:
    def test_gap_exists_and_reduction_holds(self):
        r = mixture_experiment(8, 2, 2, draws=30, seed=13)
        assert r["degenerate_reduction_exact"]
        assert len(r["winning_partitions"]) > 0
        halves = next(rec for rec in r["records"]
                      if rec["partition"] == "{1,2,3,4}|{5,6,7,8}")
        assert halves["mixture_exceeds_both"]
        assert halves["single_tree_width_to_match"] > 2

    def test_identical_trees_no_gap_beyond_doubling(self):
        """Mixing a tree with itself cannot beat the width-doubled ceiling."""
        base = tuple(range(1, 4))
        r = mixture_experiment(8, 2, 2, draws=10, seed=3, orders=(base, base),
                               partitions=[contiguous_halves_partition(8)])
        rec = r["records"][0]
        assert rec["max_rank_mixture"] <= 4  # doubled root channels


class TestDeterminism:
    @pytest.mark.parametrize("runner,kwargs", [
        (depth_efficiency_experiment,
         dict(n=8, mode_length=2, width=2, draws=10, seed=21)),
        (overlap_experiment, dict(n=8, mode_length=2, width=2, draws=5, seed=21)),
        (mixture_experiment, dict(n=8, mode_length=2, width=2, draws=5, seed=21)),
    ])
    def test_rerun_identical(self, runner, kwargs):
        assert runner(**kwargs) == runner(**kwargs)
