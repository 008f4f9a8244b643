"""Broken-ray tomography and gauge-invariant Dirichlet-to-Neumann experiments
for magnetic Schrodinger operators in domains with obstacles."""
from .brt import RayTable, SamplingSpec, Sinogram, data_distance, generate_sinogram, trace_grid
from .dtn import (
    DtnMatrix,
    NearSingularError,
    RectScene,
    adjoint_residual,
    analyticity_probe,
    dtn_matrix,
    near_singular,
    relative_gap,
    solve_dirichlet,
)
from .fields import GaugeFunction, ScalarField, VectorField, apply_gauge, curl, gauge_equivalent, holonomy
from .recon import (
    BrokenRayReconstructor,
    PixelGrid,
    build_system,
    detect_gauge_class,
    reconstruct_scalar,
    stability_report,
)
from .scene import Circle, Polygon, Scene, SceneError, concentric_scene, first_hit, validate
from .tracer import BrokenRay, Grazing, Trapped, reverse, trace, trace_to_endpoint

__version__ = "0.1.0"
