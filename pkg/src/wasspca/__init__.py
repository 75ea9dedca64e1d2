"""Geodesic PCA and log-PCA of histograms in 2-Wasserstein space."""

from .core1d import (
    Grid1D,
    Measure1D,
    TangentVector,
    barycenter,
    exp_map,
    inner,
    log_map,
    norm,
    pushforward_density,
    quantile,
    wasserstein_distance,
)
from .gpca_iter import (
    FbConfig,
    GeodesicComponent,
    GpcaModel,
    MidpointSearch,
    fit_component,
    fit_gpca,
    gpca_reconstruction_error,
    search_midpoint,
)
from .gpca_surface import (
    SurfaceModel,
    fit_surface,
    surface_reconstruction_error,
)
from .logpca import (
    LogPcaModel,
    fit_log_pca,
    logpca_reconstruction_error,
)
from .ot2d import (
    Fb2dConfig,
    GeodesicComponent2D,
    Grid2D,
    LogPca2dModel,
    Measure2D,
    TransportPlan,
    VelocityField2D,
    barycenter2d_entropic,
    fit_component_2d,
    fit_log_pca_2d,
    ot_plan_exact,
    reconstruction_error_2d,
    wasserstein_distance_2d,
)

__version__ = "0.1.0"

__all__ = [
    "Grid1D",
    "Measure1D",
    "TangentVector",
    "barycenter",
    "exp_map",
    "inner",
    "log_map",
    "norm",
    "pushforward_density",
    "quantile",
    "wasserstein_distance",
    "FbConfig",
    "GeodesicComponent",
    "GpcaModel",
    "MidpointSearch",
    "fit_component",
    "fit_gpca",
    "gpca_reconstruction_error",
    "search_midpoint",
    "SurfaceModel",
    "fit_surface",
    "surface_reconstruction_error",
    "LogPcaModel",
    "fit_log_pca",
    "logpca_reconstruction_error",
    "Fb2dConfig",
    "GeodesicComponent2D",
    "Grid2D",
    "LogPca2dModel",
    "Measure2D",
    "TransportPlan",
    "VelocityField2D",
    "barycenter2d_entropic",
    "fit_component_2d",
    "fit_log_pca_2d",
    "ot_plan_exact",
    "reconstruction_error_2d",
    "wasserstein_distance_2d",
    "__version__",
]
