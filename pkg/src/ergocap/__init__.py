"""ergocap: capacity lower bounds for ergodically stabilized stochastic
systems controlled over finite-alphabet channels.

The toolkit simulates closed loops of x_{t+1} = f(x_t, w_t) + u_t under
causal coding/control policies, estimates occupation measures and
ergodicity diagnostics, evaluates the double-averaged log-determinant
capacity bound, and estimates stabilization entropy via spanning-set
covers and the bin-decoding experiment.
"""

from .bounds import (
    BoundReport,
    CONSISTENT,
    VIOLATION_FLAG,
    harvest_states,
    integrand_bound_mc,
    largest_feasible_eps,
    partition_lower_bound,
    rate_collection,
    single_set_bound,
    verdict,
)
from .channels import (
    BlockCode,
    ChannelModel,
    CouplingPlan,
    bec,
    best_code_error,
    bsc,
    capacity,
    channel_preset,
    maximal_coupling,
    noiseless_channel,
    repetition_code,
    simulate_code_error,
    table_code,
    transmit,
    tv_distance,
)
from .config import ConfigError, ExperimentConfig, load_config, validate_config
from .decoder import (
    BinSystem,
    DecoderParams,
    DecoderReport,
    bin_decoder_experiment,
    build_bins,
)
from .errors import InvalidArgument, ModelContractError, NumericOverflow
from .occupation import (
    AmsEstimate,
    Box,
    DiagnosticReport,
    OccupationMeasure,
    PartitionSpec,
    accumulate,
    ams_estimate,
    ergodicity_diagnostic,
    interval_partition,
    joint_independence_check,
)
from .policies import (
    AdaptiveZoomPolicy,
    NullPolicy,
    Policy,
    UniformQuantizerPolicy,
    adaptive_zoom_policy,
    distinct_control_sequences,
    null_policy,
    uniform_quantizer_policy,
)
from .rng import substream
from .runner import ExperimentRunner
from .spanning import (
    EntropyEstimate,
    IntervalEstimate,
    RateCollection,
    Scenario,
    SpanningInstance,
    SpanningResult,
    build_instance,
    draw_scenarios,
    entropy_estimate,
    enumerate_candidates,
    grid_scenarios,
    harvest_candidates,
    interval_estimate_AT,
    min_spanning,
    spanning_check,
    uniform_rate,
)
from .systems import (
    InitialDistribution,
    NoiseModel,
    SystemModel,
    Trajectory,
    check_model_contract,
    cubic_model,
    doubling_map,
    gaussian_init,
    gaussian_noise,
    identity_model,
    linear_model,
    log_det_jacobian,
    no_noise,
    run_closed_loop,
    simulate,
    simulate_ensemble,
    step,
    synthetic_trajectory,
    triangular_model,
    uniform_init,
    uniform_noise,
)

__version__ = "0.1.0"
