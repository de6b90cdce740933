"""Interval reachability for neural networks and sampled-data control loops.

Sound over-approximation throughout: interval arithmetic with outward
rounding, layer-wise MLP interval extensions refined by simulation-guided
bisection, a first-order validated ODE integrator, and a recursive
closed-loop analysis whose flowpipe supports one-sided safety verdicts.
"""

from .closed_loop import (
    ClosedLoopConfig,
    LinearConstraint,
    RunSetup,
    SafetySpec,
    StepRecord,
    UnresolvedName,
    VerificationReport,
    WiringError,
    load_run_config,
    reach_nncs,
    sample_closed_loop_trajectories,
    simulate_closed_loop,
    verify,
)
from .interval import (
    Box,
    DegenerateBox,
    DimensionMismatch,
    DivisionByZeroInterval,
    EmptyList,
    Interval,
    iv_arith,
    iv_func_ext,
)
from .nn import (
    ACTIVATIONS,
    Activation,
    Layer,
    MlpNetwork,
    ParseError,
    ValidationError,
    layer_interval_ext,
    lipschitz_bound,
    load_network,
    mlp_eval,
    mlp_interval_ext,
    network_from_dict,
    network_to_dict,
    save_network,
)
from .ode import (
    DuplicateDeclaration,
    EnclosureFailure,
    FlowpipeSegment,
    IncompleteModel,
    ModelSyntaxError,
    PlantModel,
    UnboundVariable,
    UndeclaredVariable,
    apriori_enclosure,
    expr_eval_interval,
    expr_eval_point,
    parse_model,
    reach_odex,
    reach_odey,
    simulate_ode,
    unparse_model,
)
from .reach_nn import (
    InvalidTolerance,
    ReachNnResult,
    ReachStats,
    WorkItem,
    reach_mlp,
    sim_envelope,
    simulate,
    uniform_partition_mlp,
)

__version__ = "0.1.0"
