from .bounds import (
    GapEstimate,
    LemmaThresholds,
    QuadConfig,
    SweepSpec,
    bound_sweep,
    l1_gap,
    lemma_thresholds,
    terminal_marginal_gap,
)
from .checks import (
    BrightnessSpec,
    ConsistencySpec,
    LipschitzSpec,
    Prop3Spec,
    brightness,
    brightness_experiment,
    consistency_checks,
    finite_difference_jacobian,
    lipschitz_probe,
    prop3_check,
)
from .energy import energy_distance, energy_null_quantile, energy_test
from .reports import BoundReport, BoundRow, CheckResult, StatReport

__all__ = [
    'GapEstimate', 'LemmaThresholds', 'QuadConfig', 'SweepSpec',
    'bound_sweep', 'l1_gap', 'lemma_thresholds', 'terminal_marginal_gap',
    'BrightnessSpec', 'ConsistencySpec', 'LipschitzSpec', 'Prop3Spec',
    'brightness', 'brightness_experiment', 'consistency_checks',
    'finite_difference_jacobian', 'lipschitz_probe', 'prop3_check',
    'energy_distance', 'energy_null_quantile', 'energy_test',
    'BoundReport', 'BoundRow', 'CheckResult', 'StatReport',
]
