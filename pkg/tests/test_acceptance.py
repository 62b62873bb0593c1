"""Acceptance suite: one test per primary criterion, at pinned tolerances.

Each test prints a single PASS line on success (visible with ``pytest -s``);
a failed assertion marks the criterion FAIL. All randomness is seeded, so
the outcomes are reproducible bit for bit.
"""

import itertools
import json

import numpy as np
import pytest

from circuitrank import (
    ARITHMETIC,
    OperatorSpec,
    Partition,
    all_mode_partitions,
    baseline_schedule,
    contiguous_halves_partition,
    cp_generate,
    deep_circuit,
    depth_efficiency_experiment,
    embed_nonoverlapping,
    even_odd_partition,
    generalized_generate,
    grid_tensor,
    hierarchical_generate,
    map_to_decomposition,
    matricize,
    min_cut_verification,
    mixture_experiment,
    numerical_rank,
    overlap_experiment,
    perfect_binary_tree,
    rectifier_incompleteness_pair,
    sample_circuit,
    sample_cp_params,
    sample_hierarchical_params,
    shallow_circuit_from_cp,
    tensors_close,
    window_splitting_partition,
)
from circuitrank.cli import run_experiment
from circuitrank.experiments import EXPERIMENT_RANK_TOL, monte_carlo_ranks

EQ_TOL = 1e-10  # entrywise relative tolerance for the equivalence criteria
RELU_MAX = OperatorSpec("relu", "max")


def report(name):
    print(f"ACCEPTANCE {name}: PASS")


def test_cp_rank_bound():
    """100 seeded CP draws, N=6, M in {2,3}, r0 in 1..5: every one of the 31
    partitions stays within the term count. Zero violations."""
    partitions = all_mode_partitions(6)
    assert len(partitions) == 31
    draws = 0
    violations = 0
    for m, r0 in itertools.product((2, 3), range(1, 6)):
        for d in range(10):
            params = sample_cp_params(6, m, r0, np.random.default_rng([101, m, r0, d]))
            t = cp_generate(params)
            draws += 1
            for p in partitions:
                if numerical_rank(matricize(t, p), EXPERIMENT_RANK_TOL) > r0:
                    violations += 1
    assert draws == 100
    assert violations == 0, f"{violations} partition ranks exceeded the term count"
    report("cp-rank-bound")


def test_depth_efficiency_and_completeness():
    """100 seeded deep draws, N=8, M=2, widths 2: even-odd rank 16 in at
    least 99 of 100, so shallow replication needs at least 16 channels."""
    result = depth_efficiency_experiment(8, 2, 2, draws=100, seed=7)
    assert result["ceiling"] == 16
    assert result["fraction_at_ceiling"] >= 0.99, result
    assert result["implied_shallow_channels"] >= 16
    assert result["deep_width"] == 2
    report("depth-efficiency-completeness")


def test_circuit_decomposition_equivalence():
    """50 seeded non-overlapping arithmetic circuits across N in {2,4,8},
    M in {2,3}: grid tensor equals the mapped generator entrywise; the
    position-shared shallow circuit equals its CP form likewise."""
    combos = list(itertools.product((2, 4, 8), (2, 3)))
    for i in range(50):
        n, m = combos[i % len(combos)]
        c = deep_circuit(n, m, 2, np.random.default_rng([202, i]))
        assert tensors_close(grid_tensor(c),
                             hierarchical_generate(map_to_decomposition(c)),
                             EQ_TOL), f"deep mismatch at case {i}"
    for i in range(50):
        n, m = combos[i % len(combos)]
        params = sample_cp_params(n, m, 3, np.random.default_rng([203, i]))
        c = shallow_circuit_from_cp(n, params.vectors, params.weights)
        assert tensors_close(grid_tensor(c), cp_generate(params), EQ_TOL), \
            f"shallow/CP mismatch at case {i}"
    report("circuit-decomposition-equivalence")


def test_generalized_equivalence():
    """50 seeded (relu, max) circuits, N=4, M=2, basis representation:
    grid tensor equals the generalized generator entrywise."""
    for i in range(50):
        c = sample_circuit(baseline_schedule(4), 2, 2, RELU_MAX,
                           np.random.default_rng([204, i]))
        mapped = map_to_decomposition(c)
        assert tensors_close(grid_tensor(c), generalized_generate(mapped, RELU_MAX),
                             EQ_TOL), f"rectifier mismatch at case {i}"
    report("generalized-equivalence")


def test_rectifier_incompleteness():
    """The explicit deep (relu, max) construction at N=8, M=2 has even-odd
    rank at most 2 and is replicated entrywise by a shallow network with at
    most 2 hidden channels."""
    deep, shallow = rectifier_incompleteness_pair(8, 2)
    assert len(deep.widths) == 3 and shallow.widths == (1,)
    deep_grid = grid_tensor(deep)
    rank = numerical_rank(matricize(deep_grid, even_odd_partition(8)),
                          EXPERIMENT_RANK_TOL)
    assert rank <= 2, f"even-odd rank {rank} exceeds 2"
    assert np.array_equal(deep_grid.data, grid_tensor(shallow).data)
    report("rectifier-incompleteness")


def test_pooling_geometry_bias():
    """200 seeded deep draws, N=8, M=2, widths 2: window-splitting rank hits
    16 and contiguous halves stays at most 2, each in at least 99% of draws."""
    tree = perfect_binary_tree(8)
    split = window_splitting_partition(baseline_schedule(8), 1)
    halves = contiguous_halves_partition(8)

    def factory(rng):
        return hierarchical_generate(sample_hierarchical_params(tree, 2, 2, rng))

    ranks = monte_carlo_ranks(factory, [split, halves], 200, seed=11,
                              rel_tol=EXPERIMENT_RANK_TOL)
    frac_split = float(np.mean(ranks[:, 0] == 16))
    frac_halves = float(np.mean(ranks[:, 1] <= 2))
    assert frac_split >= 0.99, f"split ceiling fraction {frac_split}"
    assert frac_halves >= 0.99, f"halves bound fraction {frac_halves}"
    report("pooling-geometry-bias")


def test_overlap_efficiency():
    """200 seeded stride-1 draws at N=8, M=2, widths 2 strictly exceed the
    non-overlapping contiguous-halves ceiling of 2; suppressing the overlap
    weights reproduces the non-overlapping grid tensor entrywise."""
    result = overlap_experiment(8, 2, 2, draws=200, seed=5)
    assert result["nonoverlapping_ceiling"] == 2
    assert result["max_rank"] > 2
    assert result["exceeds_ceiling"]
    assert result["reduction_entrywise"], result["reduction_max_abs_diff"]
    report("overlap-efficiency")


def test_min_cut_exactness():
    """For every suite circuit (N in {4,8}, widths in {1,2,3}; even-odd,
    contiguous halves, one custom partition): the 200-draw max separation
    rank equals the multiplicative min-cut exactly, no draw exceeds it, and
    the flow solver agrees with exhaustive enumeration."""
    for n in (4, 8):
        schedule = baseline_schedule(n)
        partitions = [even_odd_partition(n), contiguous_halves_partition(n)]
        if n == 4:
            partitions.append(Partition.from_left(4, [1, 4]))
        else:
            partitions.append(window_splitting_partition(schedule, 2))
        for width in (1, 2, 3):
            result = min_cut_verification(n, 2, width, partitions, draws=200,
                                          seed=300 + n + width)
            for rec in result["records"]:
                ctx = f"n={n} width={width} {rec['partition']}"
                assert rec["solver_matches_enumeration"], ctx
                assert rec["all_draws_within_cut"], ctx
                assert rec["max_equals_cut"], \
                    f"{ctx}: max {rec['max_rank']} vs cut {rec['min_cut']}"
    report("min-cut-exactness")


def test_mixture_efficiency():
    """Baseline versus swapped-dilation trees at N=8, M=2, widths 2 with
    exchanges at all common nodes: some partition's 200-draw mixture max
    strictly exceeds both single-tree maxima; the degenerate mixture equals
    the single tree entrywise."""
    result = mixture_experiment(8, 2, 2, draws=200, seed=13)
    assert result["degenerate_reduction_exact"]
    assert len(result["winning_partitions"]) >= 1, "no partition shows a gap"
    halves = next(r for r in result["records"]
                  if r["partition"] == "{1,2,3,4}|{5,6,7,8}")
    assert halves["mixture_exceeds_both"], halves
    report("mixture-efficiency")


DETERMINISM_CONFIGS = [
    {"experiment": "depth_efficiency", "seed": 7, "n": 8, "mode_length": 2,
     "width": 2, "draws": 10},
    {"experiment": "rank_spectrum", "seed": 7, "draws": 5,
     "model": {"kind": "cp", "order": 6, "mode_length": 2, "num_terms": 3},
     "partitions": ["even_odd"]},
    {"experiment": "separation_rank", "seed": 7,
     "circuit": {"schedule": {"type": "baseline", "n": 4}, "mode_length": 2,
                 "widths": 2},
     "partitions": ["even_odd", "contiguous_halves"]},
    {"experiment": "overlap", "seed": 7, "n": 8, "mode_length": 2, "width": 2,
     "draws": 5},
    {"experiment": "min_cut_verify", "seed": 7, "n": 4, "mode_length": 2,
     "width": 2, "draws": 10, "partitions": ["even_odd"]},
    {"experiment": "width_advise", "seed": 7, "n": 8, "mode_length": 2,
     "budget": 8, "partitions": ["contiguous_halves"]},
    {"experiment": "mixture", "seed": 7, "n": 8, "mode_length": 2, "width": 2,
     "draws": 5},
    {"experiment": "grid_tensor_dump", "seed": 7,
     "circuit": {"schedule": {"type": "baseline", "n": 4}, "mode_length": 2,
                 "widths": 2}},
]


def test_determinism():
    """Every experiment kind rerun with the same seed yields byte-identical
    report payloads."""
    assert len(DETERMINISM_CONFIGS) == 8
    for config in DETERMINISM_CONFIGS:
        payloads = []
        for _ in range(2):
            experiment, resolved, results = run_experiment(dict(config))
            payload = {"experiment": experiment, "config": resolved,
                       "results": results}
            payloads.append(json.dumps(payload, sort_keys=True).encode())
        assert payloads[0] == payloads[1], config["experiment"]
    report("determinism")
