"""Mean first passage time of Brownian escape from dendritic-spine domains.

Three independent routes to the same number: closed-form matched
asymptotics, a P1 finite element solver, and reflected Brownian walkers.
The common entry points are re-exported here; the full surfaces live in
:mod:`spinemfpt.geometry`, :mod:`spinemfpt.asymptotics`,
:mod:`spinemfpt.fem`, :mod:`spinemfpt.montecarlo`, and
:mod:`spinemfpt.harness` (tables, fields, validation).
"""

__version__ = "0.1.0"

from .geometry import (
    InvalidGeometry,
    SpineGeometry,
    build_curved_spine,
    build_head_only,
    build_neck_only,
    build_straight_spine,
    effective_neck_length,
    geometry_from_config,
)
from .asymptotics import (
    AsymptoticParams,
    ExpansionResult,
    TooCloseToWindow,
    mfpt_neumann_robin,
    mfpt_spine,
    params_from_geometry,
    phi_disk,
)
from .fem import (
    generate_mesh,
    refine_and_extrapolate,
    solve_escape,
    solve_neumann_robin,
    window_flux,
)
from .montecarlo import (
    MfptEstimate,
    WalkConfig,
    simulate_field,
    simulate_mfpt,
)
from .harness import (
    RunSpec,
    run_field,
    run_single,
    run_table51,
    run_table52,
    run_validate,
)

__all__ = [
    "__version__",
    "InvalidGeometry",
    "SpineGeometry",
    "build_curved_spine",
    "build_head_only",
    "build_neck_only",
    "build_straight_spine",
    "effective_neck_length",
    "geometry_from_config",
    "AsymptoticParams",
    "ExpansionResult",
    "TooCloseToWindow",
    "mfpt_neumann_robin",
    "mfpt_spine",
    "params_from_geometry",
    "phi_disk",
    "generate_mesh",
    "refine_and_extrapolate",
    "solve_escape",
    "solve_neumann_robin",
    "window_flux",
    "MfptEstimate",
    "WalkConfig",
    "simulate_field",
    "simulate_mfpt",
    "RunSpec",
    "run_field",
    "run_single",
    "run_table51",
    "run_table52",
    "run_validate",
]
