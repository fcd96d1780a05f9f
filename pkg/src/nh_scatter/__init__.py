from nh_scatter.bath import (
    BathError,
    BathSpec,
    DegenerateBathError,
    InfiniteRootError,
    InvalidBathError,
    OnBandCurveError,
    SelfIntersection,
    SymbolRoots,
    dispersion,
    dispersion_derivative,
    self_intersections,
    symbol_roots,
    winding_number,
)
from nh_scatter.config import (
    BathFileError,
    ConfigError,
    ConfigParseError,
    ParameterDomainError,
    RunConfig,
    load_bath_file,
    load_config,
)
from nh_scatter.eigensolver import OracleError, QRStallError
from nh_scatter.math import align, kahan_sum, loglog_fit
from nh_scatter.oracle import (
    Boundary,
    DimensionLimitError,
    DimensionMismatchError,
    EDResult,
    LatticeHamiltonian,
    StateClass,
    account_spectrum,
    build_hamiltonian,
    classify_states,
    eigenpairs,
    match_state,
    skin_report,
)
from nh_scatter.selfenergy import (
    AmbiguousBranchError,
    Branch,
    BranchIdentityError,
    LatticeTooSmallError,
    NumericalOverflowError,
    OnFiniteSpectrumError,
    SelfEnergyError,
    SelfEnergyResult,
    Side,
    VanishingGroupVelocityError,
    branch_jump,
    sigma_finite_residue,
    sigma_finite_sum,
    sigma_thermo,
    sum_rule_residual,
)
from nh_scatter.solver import (
    AtPoleError,
    BoundState,
    ConvergedToBoundStateError,
    EmitterParams,
    FineTunedInputError,
    InvalidEmitterError,
    NoConvergenceError,
    NotDegenerateError,
    ScatteringMomentum,
    SecondOrderPole,
    SolverError,
    bound_states,
    degenerate_momenta,
    emitter_green,
    imk_leading,
    scattering_momentum,
)
from nh_scatter.wavefn import (
    ClosedFormDomainError,
    HermitianLimitError,
    RegionMismatchError,
    WaveFunction,
    WaveFunctionError,
    ZeroStateError,
    degenerate_wavefunction,
    formal_wavefunction,
    hn_closed_form,
    ls_wavefunction,
    nnn_closed_form,
    normalize,
    plane_wave_superposition,
)

__all__ = [
    "AmbiguousBranchError",
    "AtPoleError",
    "BathError",
    "BathFileError",
    "BathSpec",
    "BoundState",
    "Boundary",
    "Branch",
    "BranchIdentityError",
    "ClosedFormDomainError",
    "ConfigError",
    "ConfigParseError",
    "ConvergedToBoundStateError",
    "DegenerateBathError",
    "DimensionLimitError",
    "DimensionMismatchError",
    "EDResult",
    "EmitterParams",
    "FineTunedInputError",
    "HermitianLimitError",
    "InfiniteRootError",
    "InvalidBathError",
    "InvalidEmitterError",
    "LatticeHamiltonian",
    "LatticeTooSmallError",
    "NoConvergenceError",
    "NotDegenerateError",
    "NumericalOverflowError",
    "OnBandCurveError",
    "OnFiniteSpectrumError",
    "OracleError",
    "ParameterDomainError",
    "QRStallError",
    "RegionMismatchError",
    "RunConfig",
    "ScatteringMomentum",
    "SecondOrderPole",
    "SelfEnergyError",
    "SelfEnergyResult",
    "SelfIntersection",
    "Side",
    "SolverError",
    "StateClass",
    "SymbolRoots",
    "VanishingGroupVelocityError",
    "WaveFunction",
    "WaveFunctionError",
    "ZeroStateError",
    "account_spectrum",
    "align",
    "bound_states",
    "branch_jump",
    "build_hamiltonian",
    "classify_states",
    "degenerate_momenta",
    "degenerate_wavefunction",
    "dispersion",
    "dispersion_derivative",
    "eigenpairs",
    "emitter_green",
    "formal_wavefunction",
    "hn_closed_form",
    "imk_leading",
    "kahan_sum",
    "load_bath_file",
    "load_config",
    "loglog_fit",
    "ls_wavefunction",
    "match_state",
    "nnn_closed_form",
    "normalize",
    "plane_wave_superposition",
    "scattering_momentum",
    "self_intersections",
    "sigma_finite_residue",
    "sigma_finite_sum",
    "sigma_thermo",
    "skin_report",
    "sum_rule_residual",
    "symbol_roots",
    "winding_number",
]
