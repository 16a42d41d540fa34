"""Barrier verification lab and explicit solver for Trudinger's equation."""

__version__ = "0.1.0"

from .calculus import Exponents, Jet, kp_form, kp_lambda_form, lp_form, tp_form  # noqa: E402
from .problem import (Annulus, Ball, BallUnionBox, BoundaryDatum, Box, CylinderProblem,  # noqa: E402
                      domain_from_dict)
from .barriers import make_barrier  # noqa: E402
from .verifier import sweep  # noqa: E402
from .solver import Grid, SolveConfig, solve  # noqa: E402
from .expr import parse_expression  # noqa: E402

__all__ = [
    "Annulus", "Ball", "BallUnionBox", "BoundaryDatum", "Box", "CylinderProblem", "Exponents", "Grid",
    "Jet", "SolveConfig", "domain_from_dict", "kp_form", "kp_lambda_form", "lp_form", "make_barrier",
    "parse_expression", "solve", "sweep", "tp_form",
]
