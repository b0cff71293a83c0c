"""
网络博弈干预模块
"""

from .config import DEFAULT_CONFIG, load_config
from .equilibria import (
    AffineVi,
    AnalysisReport,
    FeasibilityVerdict,
    analyze_game,
    nash_equilibrium,
    optimal_intervention,
    social_optimum,
    solve_affine_vi,
    welfare_gap,
)
from .game import AssumptionReport, NetworkGame, spectral_norm
from .protocols import (
    ProtocolKind,
    ProtocolOptions,
    covers_feedback_image,
    make_protocol,
    protocol_output,
    protocol_rhs,
)
from .scenarios import (
    CournotParams,
    ScenarioSpec,
    cournot_to_game,
    load_scenario,
    random_game,
    random_initial_state,
    save_results,
    save_scenario,
)
from .sets import Ball, Box, ConstraintSet, FullSpace, ScalarInterval, Subspace, set_from_dict
from .sim import (
    ConvergenceMetrics,
    LyapunovReferences,
    SimConfig,
    Trajectory,
    convergence_metrics,
    lyapunov_value,
    simulate,
    step,
)

__all__ = [
    'DEFAULT_CONFIG', 'load_config',
    'AffineVi', 'AnalysisReport', 'FeasibilityVerdict', 'analyze_game', 'nash_equilibrium',
    'optimal_intervention', 'social_optimum', 'solve_affine_vi', 'welfare_gap',
    'AssumptionReport', 'NetworkGame', 'spectral_norm',
    'ProtocolKind', 'ProtocolOptions', 'covers_feedback_image', 'make_protocol',
    'protocol_output', 'protocol_rhs',
    'CournotParams', 'ScenarioSpec', 'cournot_to_game', 'load_scenario', 'random_game',
    'random_initial_state', 'save_results', 'save_scenario',
    'Ball', 'Box', 'ConstraintSet', 'FullSpace', 'ScalarInterval', 'Subspace', 'set_from_dict',
    'ConvergenceMetrics', 'LyapunovReferences', 'SimConfig', 'Trajectory', 'convergence_metrics',
    'lyapunov_value', 'simulate', 'step',
]
