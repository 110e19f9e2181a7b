"""Reconstruction of 2-D heat-conductivity fields from boundary
temperatures by Metropolis-Hastings sampling, with normalized acceptance
schemes and full run diagnostics."""

__version__ = "0.1.0"

from .grid import GridSpec, boundary_trace, embed_boundary  # noqa: F401
from .forward import (assemble_system, pseudo_transient_solve,  # noqa: F401
                      solve_forward)
from .priors import mixed_partial, mixed_roughness, roughness  # noqa: F401
from .phantoms import (constant, gaussian_well, make_phantom,  # noqa: F401
                       tilted_plane)
