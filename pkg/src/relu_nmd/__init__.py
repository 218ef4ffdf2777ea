"""ReLU nonlinear matrix decomposition: find a rank-r Theta with max(0, Theta) close to a nonnegative X."""

from .data import (
    ImageDataset,
    SyntheticSpec,
    generate_synthetic,
    load_csv,
    load_idx,
    nmf_compression_error,
    nnls,
    save_csv,
    sparse_surrogate,
    write_idx,
)
from .errors import (
    BadMagicError,
    ConvergenceError,
    CsvParseError,
    DataFormatError,
    DimensionOverflowError,
    EmptyMatrixError,
    LabelCountMismatchError,
    ParameterError,
    RankDeficiencyWarning,
    ReluNMDError,
    TruncatedPayloadError,
)
from .initialization import (
    InitConfig,
    factors_from_theta,
    initialize,
    nuclear_norm_init,
    optimal_scale,
    project_feasible,
    random_scaled_init,
    tsvd_init,
)
from .linalg import (
    TsvdResult,
    frobenius_inner,
    frobenius_norm,
    nuclear_norm,
    relative_error,
    relu,
    solve_ls_left,
    solve_ls_right,
    tsvd,
)
from .solvers import (
    MomentumState,
    SolveReport,
    SolverConfig,
    SparsityPattern,
    a_naive_nmd,
    a_nmd,
    momentum_update,
    naive_nmd,
    nesterov_extrapolate,
    polyak_extrapolate,
    three_block_nmd,
    tsvd_baseline,
    z_update,
)

__version__ = "0.1.0"
