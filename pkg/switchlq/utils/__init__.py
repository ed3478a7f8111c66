from .integrate import DormandPrince54, Trajectory
from .linalg import (
    symmetrize, asymmetry, eig_min, eig_max, op_norm, project_psd,
    svec, smat, sym_dim, operator_matrix, spectral_abscissa, block_diag_family,
)
from .runtime import thread_cap, ordered_map, derive_seed, make_rng
