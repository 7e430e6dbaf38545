from .amplitude_flow import (AmplitudeFlowProblem, AmplitudeFlowResult, SolverConfig, af_gradient,
                             af_minimize)
from .layerwise import layerwise_reconstruct, prefix_suffix, single_layer_problem
from .probe import probe_problem, reconstruct_probe
from .sparse import (decomposition_objective, distribute_scale, estimate_scattering, matrix_objective,
                     project_diag_normalized, prox_gradient, scattering_gradient, sparse_decompose,
                     sparse_matrix_decomposition, update_fidelity_scale)
from .state import ReconstructionState

__all__ = [
    "AmplitudeFlowProblem", "AmplitudeFlowResult", "SolverConfig", "af_gradient", "af_minimize",
    "layerwise_reconstruct", "prefix_suffix", "single_layer_problem", "probe_problem",
    "reconstruct_probe", "decomposition_objective", "distribute_scale", "matrix_objective", "prox_gradient",
    "scattering_gradient", "estimate_scattering", "project_diag_normalized", "sparse_decompose",
    "sparse_matrix_decomposition", "update_fidelity_scale", "ReconstructionState",
]
