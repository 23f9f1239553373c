"""Finite-scale diagnostics for asymptotic expanders, quasi-locality and coarse maps."""

__version__ = "0.1.0"

from .coarse import (
    CoarseMap,
    CoarseModuli,
    boundary_transfer_check,
    distortion_check,
    estimate_moduli,
    half_selection,
    pullback_bound_check,
    transfer_refutation,
)
from .errors import *  # noqa: F401,F403
from .expansion import (
    admissible_window,
    asymptotic_certificate,
    cheeger_constant,
    expansion_profile,
    growth_lemma_check,
    ql_equivalence_audit,
    separated_product,
)
from .generators import (
    GeneratorSpec,
    complete,
    cycle,
    family_sequence,
    glue_example,
    glued_sequence,
    hypercube,
    interleaved_counterexample,
    path,
    random_regular,
)
from .linalg import (
    DenseOperator,
    averaging_projection,
    compression,
    discrete_laplacian,
    frobenius_norm,
    ghost_product_bound,
    ghost_profile,
    kernel_projection,
    multiplication_operator,
    normalizer_decay_check,
    operator_norm,
    partial_translation,
    poincare_constant,
    poincare_slack,
    propagation_profile,
    spectral_gap,
    spectrum,
)
from .space import (
    FiniteMetricSpace,
    SpaceSequence,
    edge_path_metric,
    growth_function,
    inner_boundary,
    r_boundary,
    r_neighborhood,
    set_distance,
)
from .ula import balanced_split, greedy_decomposition, non_ula_certificate, normalized_measure, ula_witness
