"""Hierarchically blocked one-sided Jacobi SVD/HSVD.

A numpy-based library for the singular value decomposition (and its
hyperbolic variant) by the one-sided Jacobi method, organized in two
blocking levels plus a simulated multi-worker outer level, driven by
perfectly parallel pivot strategies that stay as close as possible to the
classical row/column-cyclic orders.
"""

from .blockkernel import (
    BlockTaskResult,
    JDefinitenessError,
    RankDeficiencyError,
    Signature,
    cholesky_in_place,
    gram,
    inner_jacobi,
    postmultiply,
    qr_peeloff,
)
from .distsim import (
    ColumnMapping,
    ExchangeRecord,
    Topology,
    optimize_mapping,
    run_distributed,
)
from .driver import (
    HsvdResult,
    SolverConfig,
    UnsafeScalingError,
    block_jacobi,
    extract_sigma,
    solve_for_v,
)
from .robustnorm import (
    FpParams,
    ScaledSquare,
    add_scaled,
    common_form,
    norm2,
    norm2_value,
    safe_bounds,
    scale_exponent,
    sum_squares,
)
from .rotation import (
    HyperbolicDomainError,
    PivotGram,
    RotationParams,
    compute_rotation,
    departure,
    departure_survey,
)
from .strategy import (
    PStrategy,
    SearchBudgetExceeded,
    SequentialOrdering,
    StrategyError,
    brent_luk,
    closer_to,
    closest_pstrategy,
    column_cyclic,
    dump_strategy,
    expand_pstrategy,
    index_permutation,
    make_strategy,
    modified_modulus,
    parse_strategy,
    reverse_pstrategy,
    row_cyclic,
    step_equivalent,
    validate_pstrategy,
)
from .testgen import (
    SpectrumSpec,
    canonical_sort,
    gen_factor,
    gen_spectrum,
    relative_error,
)

__version__ = "0.1.0"
