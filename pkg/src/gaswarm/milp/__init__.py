from .model import (Block, MilpBuilder, ModelError, ParametricMilp, PartialAssignment, Row,
                    Sense, UnknownVariable, VariableDef, fix_binaries)
from .simplex import LpRelaxation, LpSolution, LpStatus, SimplexError
from .solve import (FreeIntegerPresent, HintInfeasible, IncumbentSource, MilpResult, SolveParams,
                    Status, solve_lp, solve_milp)
from .validation import ValidationReport, row_violations, validate_solution

__all__ = [
    "Block", "MilpBuilder", "ModelError", "ParametricMilp", "PartialAssignment", "Row", "Sense",
    "UnknownVariable", "VariableDef", "fix_binaries", "LpRelaxation", "LpSolution", "LpStatus",
    "SimplexError", "FreeIntegerPresent", "HintInfeasible", "IncumbentSource", "MilpResult",
    "SolveParams", "Status", "solve_lp", "solve_milp", "ValidationReport", "row_violations",
    "validate_solution",
]
