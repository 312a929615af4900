"""Phase-space quantum walk of one and two trapped ions.

Simulation of the walk itself (state-dependent displacements interleaved
with carrier coin pulses, at four fidelity levels of the light-motion
coupling), of the measurement chain (Fourier-component probing of position
and momentum marginals, carrier Rabi flops), and of the convex constrained
least-squares reconstruction of the position density.
"""

from .dynamics import (
    FidelityModel,
    PulseKind,
    PulseSpec,
    bichromatic_hamiltonian,
    carrier_hamiltonian,
    displacement_propagator,
    evolve,
    propagator,
    step_size,
)
from .fock import (
    GridCoverageError,
    HilbertParams,
    LeakyStateError,
    MotionalEnsemble,
    SpinMotionState,
    TruncationError,
    coherent_state,
    exact_position_density,
    fock_state,
    hermite_functions,
    ladder_operators,
    number_operator,
    quadrature_operators,
    wavefunction_on_grid,
)
from .probe import (
    FitWindowError,
    PhononFit,
    ProbeScan,
    RabiScan,
    WidthEstimate,
    carrier_rabi_scan,
    exact_scan,
    expected_observable,
    fit_mean_phonon,
    probe_strength,
    simulate_scan,
    width_from_curvature,
)
from .reconstruct import (
    DensityEstimate,
    ForwardModel,
    InfeasibleBoundError,
    PositionGrid,
    build_forward_model,
    estimate_kinetic_bound,
    fisher_functional,
    reconstruct_density,
    solve_qp_active_set,
)
from .walk import (
    WalkConfig,
    WalkResult,
    classical_walk,
    classical_width_reference,
    mean_phonon,
    prepare_initial,
    quantum_walk,
    recombine_spin,
    reversal_fidelity,
    reversed_walk,
    two_ion_walk,
    width_p,
    width_x,
)

__version__ = "0.1.0"
