"""Design and analysis toolkit for two-actuator-array cross-directional control.

Factor paired response matrices over a shared output basis, synthesize
mid-ranging IMC controllers with static input/output compensators, analyze
sensitivity and robustness on frequency grids, validate designs with a
discrete-time closed-loop simulator, and post-process traces into amplitude
spectral densities and integrated motion curves.
"""

from .analysis import (
    FrequencyGrid,
    InputSensitivitySweep,
    ModalSensitivities,
    OpenLoopResult,
    RobustStabilityResult,
    SensitivitySweep,
    gain_ratio,
    gain_ratio_gradient,
    input_sensitivity_sweep,
    modal_sensitivities,
    open_loop_and_margin,
    output_sensitivity_sweep,
    robust_stability_margin,
    stationary_directions,
)
from .design import (
    ImcEquivalentDynamics,
    MidrangingFilters,
    SingleArrayDesign,
    TwoArrayDesign,
    closed_loop_poles,
    compose_design,
    input_compensator,
    midranging_filters,
    modal_weighting,
    output_compensator,
    single_array_design,
)
from .numlin import (
    GsvdFactorization,
    ResponsePair,
    condition_number,
    gsvd,
    pseudo_inverse,
    regularized_inverse,
    subspace_angles,
)
from .plant import (
    DiscreteFilter,
    MultiChannelFilter,
    ScalarTransferFunction,
    actuator_lag,
    apply_filter,
    freq_response,
    zoh_discretize,
)
from .sim import (
    DisturbanceModel,
    PlantParams,
    Resonance,
    SimTrace,
    UncertaintySpec,
    gen_disturbance,
    simulate_single_array,
    simulate_two_array,
    synth_response_pair,
)
from .spectral import SpectrumSet, asd, ibm, ibm_frequencies, welch_asd

__version__ = "0.1.0"
