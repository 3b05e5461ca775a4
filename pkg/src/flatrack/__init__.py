"""Newton-Raphson tracking control with flat-system predictors.

Library layers, bottom up: ``densela`` (small dense linear algebra),
``flatcore`` (flat systems and the closed-form predictor), ``plants``,
``controllers``, ``stability`` and ``sim``. ``cli`` is the command-line
front end.
"""
from .controllers import (
    DnrcState,
    ReferenceSignal,
    dnrc_flat_udot,
    dnrc_generic_udot,
    fixed_input_predict,
    snrc_input,
)
from .densela import StabilityVerdict
from .errors import (
    ConfigError,
    FlatrackError,
    SimulationAborted,
    SingularConfiguration,
    SingularJacobian,
    SingularMatrix,
    SingularPrediction,
)
from .flatcore import (
    FlatPredictor,
    FlatSystem,
    build_predictor,
    chain_flat_system,
    closed_loop_matrix,
    combined_dnrc_matrix,
    invert_prediction,
    predict,
)
from .plants import (
    BicycleParams,
    PendulumParams,
    PlantModel,
    bicycle,
    integrator_chain,
    pendulum,
    plant_by_name,
)
from .sim import (
    Metrics,
    SimConfig,
    SimTrace,
    compute_metrics,
    prediction_error_probe,
    rk4_step,
    run_closed_loop,
)
from .stability import (
    AlphaThreshold,
    RoaEstimate,
    alpha_threshold_search,
    roa_estimate,
    snrc_hurwitz_check,
)

__version__ = "0.1.0"
