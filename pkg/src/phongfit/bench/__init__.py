from .metrics import angle_between, rotation_error_deg, rotation_error_trace
from .models import ellipsoid_cage, make_chain3, make_ellipsoid, unit_icosphere
from .probe import ProbeResult, run_probe
from .sampling import NoVisibleTrianglesError, SampledData, sample_observations
from .study import (
    DEFAULT_LAMBDA_GRID,
    ConfigError,
    OptimizerArm,
    StudySpec,
    TrialOutcome,
    lambda_sweep_spec,
    load_study_config,
    parse_study_config,
    run_study,
    run_trial,
    trial_seed,
)
