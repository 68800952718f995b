"""Variance-driven variable impedance controller design toolkit.

Pipeline: demonstrations -> heteroscedastic GP task model -> stiffness
profile -> polytopic embedding -> matrix-inequality certification ->
preference-guided solution search -> closed-loop validation.
"""

__version__ = "0.1.0"

from .demos import DemoCorpus, Demonstration, align, load_demonstrations
from .errors import (AlignmentError, DegenerateProfileError, FitError, ParseError,
                     SearchError, SimulationDivergenceError, ValidationError,
                     VicDesignError)
from .hgp import HeteroscedasticGP, KernelParams, TaskModel, extract_dp_max, fit_hgp
from .lmi import (DStabRegion, LmiBlock, build_dstab_region, dstab_blocks,
                  effort_error_blocks, region_membership, stability_blocks)
from .polytope import (ContinuousVic, PolytopicVic, VertexSystem, build_polytope,
                       eval_state_matrix, zoh_discretize)
from .preference import (AssessmentResult, DesignConfig, DesignVariant,
                         PreferenceField, SuitabilityScore, UserPreference, assess,
                         build_field, f_perf)
from .sdp import SdpProblem, SdpSolution, min_effort, solve
from .search import SearchOutcome, VicDesigner, search
from .simulate import (ForceSchedule, ForceWindow, SimResult, compare,
                       measure_overshoot, simulate)
from .stiffness import (ControllerSolution, StiffnessProfile, build_profile,
                        scale_stiffness, write_profile_csv)

__all__ = [
    "AlignmentError", "AssessmentResult", "ContinuousVic", "ControllerSolution",
    "DStabRegion", "DegenerateProfileError", "DemoCorpus", "Demonstration",
    "DesignConfig", "DesignVariant", "FitError", "ForceSchedule", "ForceWindow",
    "HeteroscedasticGP", "KernelParams", "LmiBlock", "ParseError",
    "PolytopicVic", "PreferenceField", "SdpProblem", "SdpSolution",
    "SearchError", "SearchOutcome", "SimResult", "SimulationDivergenceError",
    "StiffnessProfile", "SuitabilityScore", "TaskModel", "UserPreference",
    "ValidationError", "VertexSystem", "VicDesignError", "VicDesigner",
    "align", "assess", "build_dstab_region", "build_field", "build_polytope",
    "build_profile", "compare", "dstab_blocks", "effort_error_blocks",
    "eval_state_matrix", "extract_dp_max", "f_perf", "fit_hgp",
    "load_demonstrations", "measure_overshoot", "min_effort",
    "region_membership", "scale_stiffness", "search", "simulate", "solve",
    "stability_blocks", "write_profile_csv", "zoh_discretize",
]
