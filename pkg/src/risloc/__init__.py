"""RIS-aided wideband channel sounding, sparse path recovery, localization.

The package simulates an indoor millimeter-wave link between a base station
and a mobile station, optionally relayed by a reconfigurable intelligent
surface, recovers propagation paths from compressed pilots with a greedy
multidimensional matching pursuit, and turns them into a clock-free
position fix.
"""

from .arrays import (
    SPEED_OF_LIGHT,
    DirectionVector,
    PulseShape,
    UpaGeometry,
    axis_response,
    pulse_delay_vector,
    resolve_direction_z,
    upa_response,
)
from .dictionaries import (
    SOURCE_BM,
    SOURCE_BRM,
    AngleGrid,
    DelayGrid,
    MultiDictionary,
    SensingOperator,
    apply_sensing,
    build_dictionaries,
    build_sensing,
)
from .errors import (
    ConfigError,
    DegenerateGeometry,
    EmptyInput,
    InconsistentDirection,
    MissingBlock,
    NegativeDelay,
    NoLoSPath,
    NonUnitModulus,
    NoProgress,
    ParallelGeometry,
    RislocError,
    ShapeMismatch,
    SingularCombiner,
    UnderDetermined,
)
from .experiment import (
    ExperimentConfig,
    TrialGeometry,
    TrialRecord,
    build_sources,
    build_training,
    build_trial_geometry,
    desk_config,
    empirical_cdf,
    error_percentile,
    estimate_trial,
    localize_trial,
    run_experiment,
    run_trial,
    sound_trial,
    summarize,
)
from .localization import (
    AnchorSet,
    LabeledPath,
    PositionFix,
    classify_nlos_paths,
    designate_los,
    estimate_clock_offset_single,
    locate_dual_los,
    locate_single_los,
    single_anchor_fix,
)
from .scene import (
    ChannelTaps,
    PropagationPath,
    Scene,
    Surface,
    assemble_bm_taps,
    assemble_brm_taps,
    default_surfaces,
    overall_taps,
    trace_paths,
)
from .solver import (
    MompResult,
    PathEstimate,
    SupportEntry,
    extract_path_estimates,
    momp_estimate,
    observation_nmse,
    predict_observation,
)
from .sounding import (
    ObservationBlock,
    SoundingConfig,
    TrainingSet,
    assemble_observation,
    generate_training_set,
    simulate_received_frame,
    whiten_block,
)

__version__ = "0.1.0"
