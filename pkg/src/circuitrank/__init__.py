"""Circuit grid tensors, hierarchical generators, and rank/min-cut analysis."""

from .tensor import (
    ARITHMETIC,
    DEFAULT_CLOSE_TOL,
    DEFAULT_RANK_TOL,
    DenseTensor,
    MemoryGuardError,
    OperatorSpec,
    Partition,
    generalized_outer_product,
    matricize,
    numerical_rank,
    outer_product,
    tensors_close,
)
from .trees import (
    ModeTree,
    PoolingSchedule,
    all_mode_partitions,
    baseline_schedule,
    contiguous_halves_partition,
    dilation_tree,
    even_odd_partition,
    mirror_schedule,
    perfect_binary_tree,
    resolve_partition,
    shallow_schedule,
    stride1_schedule,
    tree_from_schedule,
    window_splitting_partition,
)
from .generators import (
    CpParams,
    HierarchicalParams,
    MixedParams,
    common_exchange_modes,
    cp_generate,
    generalized_generate,
    hierarchical_generate,
    mixed_generate,
    one_hot_selector_params,
    sample_cp_params,
    sample_hierarchical_params,
    sample_mixed_params,
    uniform_widths,
)
from .circuits import (
    CircuitSpec,
    DEFAULT_ENTRY_GUARD,
    deep_circuit,
    embed_nonoverlapping,
    forward_eval,
    grid_points,
    grid_tensor,
    map_to_decomposition,
    max_indicator_circuit,
    overlapping_circuit,
    rectifier_incompleteness_pair,
    sample_circuit,
    shallow_circuit,
    shallow_circuit_from_cp,
)
from .network import (
    TensorNetworkGraph,
    advise_widths,
    build_tensor_network,
    enumerate_min_cut,
    min_cut_edges,
    min_multiplicative_cut,
    tensor_network_from_tree,
)
from .experiments import (
    RankReport,
    aggregate_ranks,
    depth_efficiency_experiment,
    min_cut_verification,
    mixture_experiment,
    monte_carlo_ranks,
    overlap_experiment,
    pooling_geometry_experiment,
    rank_spectrum,
    rank_spectrum_experiment,
    separation_rank,
    width_advice_experiment,
)

__version__ = "0.1.0"
