"""protmeas: simulator for strong, protective and generalized protective
quantum measurements on coupled system-apparatus pairs."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigError,
    ConvergenceError,
    DomainError,
    ModeError,
    OutputError,
    PreconditionError,
    ProtmeasError,
    SetupError,
    SizingError,
    ValidationError,
    WraparoundError,
)
from .hilbert import (  # noqa: F401
    DensityOperator,
    HermitianOperator,
    PointerGrid,
    StateVector,
    born_weights,
    eigendecompose,
    expectation,
    fidelity_pure,
    gaussian_packet,
    partial_trace,
    position_operator,
    tensor_product,
    translation_generator,
    von_neumann_entropy,
)
from .dynamics import (  # noqa: F401
    CompositeHamiltonian,
    CouplingProfile,
    PropagationReport,
    assemble,
    evaluate_profile,
    first_order_prediction,
    impulsive_propagator,
    propagate,
)
from .measurement import (  # noqa: F401
    ApparatusSpec,
    CollapseOutcome,
    MeasurementConfig,
    PointerSettings,
    RunResult,
    collapse_sample,
    effective_pointer_coupling,
    readout,
    run_generalized,
    run_protective,
    run_strong,
)
from .analysis import (  # noqa: F401
    ScalingFit,
    SweepResult,
    compare_to_prediction,
    fit_power_law,
    sweep_over_T,
)
from .scenarios import (  # noqa: F401
    ColdAtomOutcome,
    ColdAtomParams,
    ColdAtomSummary,
    cold_atom_analytic,
    cold_atom_run,
    qubit_benchmark_config,
    qubit_benchmark_run,
)
