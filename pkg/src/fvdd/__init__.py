"""Structure-preserving DDFV and HFV finite-volume solvers for the 2D
drift-diffusion semiconductor system."""

from .driftdiff import (CaseSpec, pn_junction, run_drift_diffusion,
                        solve_poisson_boltzmann)
from .mesh import (build_cartesian, build_triangular, distort_quads,
                   load_mesh, save_mesh, tag_boundary, validate)

__version__ = "0.1.0"

__all__ = [
    "CaseSpec", "pn_junction", "run_drift_diffusion",
    "solve_poisson_boltzmann",
    "build_cartesian", "build_triangular", "distort_quads",
    "load_mesh", "save_mesh", "tag_boundary", "validate",
    "__version__",
]
