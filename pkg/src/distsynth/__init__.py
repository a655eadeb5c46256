"""Disturbance-set synthesis for constrained LTI systems.

Given a stable discrete-time plant and a polytopic output-constraint set,
the package computes a hull-of-boxes disturbance set whose reachable outputs
stay inside the constraints while covering them as closely as possible, and
independently certifies the result.
"""

from ._accel import USING_NUMBA
from .encoder import SynthProblem, VariableLayout, assemble, h_preset
from .rpi_params import (
    ConstantsAccumulator,
    ParamSearchError,
    RpiConstants,
    RpiParams,
    compute_constants,
    select_params,
    solve_Hs,
)
from .setgeom import (
    Box,
    BoxHullSet,
    GeometryError,
    HPolytope,
    LtiSystem,
    contains_point,
    hull_outline,
    matrix_power_inf_norm,
    sample,
    simulate,
    support_box,
    support_hull,
    support_rows,
    vertices_hpoly,
)
from .synthesizer import (
    SynthResult,
    SynthesisError,
    alternate,
    heuristic_beta,
    p_step,
    q_step,
    refine,
    uniform_beta,
)
from .verifier import (
    Certificate,
    distance_dY,
    monte_carlo,
    verify_coverage,
    verify_gamma,
    verify_output_inclusion,
    verify_params,
)

__version__ = "0.1.0"

__all__ = [
    "USING_NUMBA",
    "Box",
    "BoxHullSet",
    "Certificate",
    "ConstantsAccumulator",
    "GeometryError",
    "HPolytope",
    "LtiSystem",
    "ParamSearchError",
    "RpiConstants",
    "RpiParams",
    "SynthProblem",
    "SynthResult",
    "SynthesisError",
    "VariableLayout",
    "alternate",
    "assemble",
    "compute_constants",
    "contains_point",
    "distance_dY",
    "h_preset",
    "heuristic_beta",
    "hull_outline",
    "matrix_power_inf_norm",
    "monte_carlo",
    "p_step",
    "q_step",
    "refine",
    "sample",
    "select_params",
    "simulate",
    "solve_Hs",
    "support_box",
    "support_hull",
    "support_rows",
    "uniform_beta",
    "verify_coverage",
    "verify_gamma",
    "verify_output_inclusion",
    "verify_params",
    "vertices_hpoly",
]
