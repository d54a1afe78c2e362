"""Lensless multicore-fiber single-pixel imaging: simulation and sparse
reconstruction toolkit."""

from .geometry import (
    AliasingError,
    CoreLayout,
    ImageGrid,
    LayoutKind,
    VisibilitySet,
    compute_visibilities,
    default_geometry_grid,
    fermat_spiral_layout,
    integer_grid_layout,
)
from .operators import (
    SensingOp,
    SensingVariant,
    SketchDistribution,
    SketchSet,
    circulant_embed,
    deterministic_probe_set,
    interf_adjoint,
    interf_forward,
    make_sensing_op,
    make_sketches,
    sensing_adjoint,
    sensing_apply,
    srop_adjoint,
    srop_apply,
)
from .physics import (
    IlluminationField,
    NoiseKind,
    NoiseModel,
    focused_beam,
    measure,
    raster_scan,
    speckle_intensity,
)
from .recon import (
    BpdnProblem,
    ReconResult,
    SolveStatus,
    SparsityBasis,
    frequencies_to_image,
    recover_interf_matrix,
    solve_bpdn_l1,
)

__version__ = "0.1.0"
