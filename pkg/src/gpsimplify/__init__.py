"""Feature-preserving point cloud simplification with Gaussian processes.

Per-point surface variation (a local-PCA curvature proxy) is modeled as a
GP over the cloud, with either a Euclidean Matérn kernel or its spectral
analogue on a kNN-graph Laplacian. A greedy subset-of-data loop then picks
the points whose variation the current subset explains worst, yielding a
simplified cloud that keeps sharp features dense without losing coverage.
"""

__version__ = "0.1.0"

from . import errors
from .cloud_io import (
    AUTO,
    FORMATS,
    PLY_ASCII,
    PLY_BINARY_LE,
    XYZ,
    BoundingBox,
    PointCloud,
    bounding_box,
    load_cloud,
    parse_cloud,
    save_cloud,
    write_cloud,
)
from .evaluate import (
    HausdorffReport,
    ICPResult,
    RigidTransform,
    generate_synthetic,
    hausdorff,
    icp_point_to_point,
    mean_surface_variation,
    rotation_angle,
)
from .geometry import (
    LocalFrame,
    NeighborhoodParams,
    VariationField,
    estimate_normal,
    estimate_radius,
    local_frame,
    surface_variation_field,
)
from .gp import (
    GpState,
    OptimizeResult,
    Posterior,
    extend_active_set,
    fit_gp,
    log_marginal_likelihood,
    lml_gradient,
    optimize_hyperparams,
    posterior_predict,
)
from .kernels import (
    EUCLIDEAN,
    MANIFOLD,
    KernelSpec,
    LaplacianBasis,
    build_graph_laplacian,
    kernel_matrix,
    laplacian_eigenpairs,
    matern_euclidean,
    matern_manifold,
)
from .simplify import (
    SelectionState,
    SimplifyConfig,
    SimplifyResult,
    select_batch,
    selection_scores,
    simplify,
    subsample_working_set,
)
from .spatial import SpatialIndex, build_index, farthest_point_sample

__all__ = [name for name in dir() if not name.startswith("_")]
