"""Quantum, classical (phase-randomized), reversed and two-ion walks.

One walk step is a displacement pulse followed by a coin pulse. The
displacement drives the bichromatic interaction at phi_minus = pi/2 along
the spin axis sigma_x (phi_plus = 0); the coin is a carrier pi/2 pulse
whose laser phase is offset by pi/2 from the preparation pulse so that its
spin axis is orthogonal to the displacement axis (a coin along sigma_x
would commute with the displacement and produce no interference).
coin_phase shifts the coin axis away from that default.
"""

from __future__ import annotations

from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import dynamics
from .dynamics import FidelityModel
from .fock import (
    HilbertParams,
    MotionalEnsemble,
    SpinMotionState,
    apply_momentum,
    apply_position,
    exact_position_density,
    fock_state,
)

COIN_AREA = np.pi / 4.0
_BRANCH_CUTOFF = 1e-12


@dataclass(frozen=True)
class WalkConfig:
    """Parameters of one walk experiment.

    step_size is the outermost displacement per step in ground-state widths:
    2.0 by default for one ion; for two ions it is the displacement of the
    |++>_x / |-->_x branches and defaults to 4.0 (same drive strength).
    """

    n_steps: int
    params: HilbertParams
    model: FidelityModel = FidelityModel.LAMB_DICKE
    step_size: float | None = None
    coin_phase: float = 0.0
    seed: int | None = None
    trials: int = 200

    def __post_init__(self):
        object.__setattr__(self, "model", FidelityModel(self.model))
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.model in (FidelityModel.THIRD_ORDER, FidelityModel.X_DIAGONAL):
            raise ValueError(
                f"{self.model.value} only corrects the x quadrature and cannot "
                "drive the walk's displacement pulses; use lamb_dicke or all_order"
            )
        if self.step_size is None:
            object.__setattr__(self, "step_size", 2.0 * self.params.n_ions)

    @property
    def pulse_displacement(self) -> float:
        """Displacement per unit spin eigenvalue; the pulse area is half this."""
        return self.step_size / self.params.n_ions


@dataclass(frozen=True)
class WalkResult:
    """Per-step snapshots (index 0 = initial state) plus the configuration."""

    config: WalkConfig
    snapshots: tuple

    def __len__(self) -> int:
        return len(self.snapshots)


def required_n_max(n_steps: int, step_size: float) -> int:
    """Fock truncation adequacy heuristic (alpha + 3)^2 with alpha = N*s/2."""
    alpha = 0.5 * n_steps * step_size
    return max(16, int(np.ceil((alpha + 3.0) ** 2)))


def _cache_key(kind: str, params: HilbertParams, model: FidelityModel, *extra):
    return (kind, params.n_max, params.eta, params.n_ions, model.value) + extra


def _walk_pulses(config: WalkConfig, reverse: bool = False):
    """(H, area, cache_key) for the displacement and coin pulses of one step."""
    p = config.params
    phi_plus = np.pi if reverse else 0.0
    coin_phase = config.coin_phase + np.pi / 2.0 + (np.pi if reverse else 0.0)
    h_d = dynamics.bichromatic_hamiltonian(p, phi_plus, np.pi / 2.0, config.model)
    h_c = dynamics.carrier_hamiltonian(p, coin_phase, config.model)
    key_d = _cache_key("walk_d", p, config.model, round(phi_plus, 12))
    key_c = _cache_key("walk_c", p, config.model, round(coin_phase, 12))
    return (h_d, 0.5 * config.pulse_displacement, key_d), (h_c, COIN_AREA, key_c)


def prepare_initial(params: HilbertParams,
                    model: FidelityModel = FidelityModel.LAMB_DICKE) -> SpinMotionState:
    """Motional ground state with every spin in |+>_y.

    Built by applying the carrier pi/2 pulse (phase 0) to |-,...>_z (x) |0>
    so that the configured fidelity model applies to the preparation too.
    """
    spin_down = np.zeros(params.spin_dim, dtype=complex)
    spin_down[-1] = 1.0
    state = SpinMotionState.from_product(spin_down, fock_state(0, params), params)
    h_c = dynamics.carrier_hamiltonian(params, 0.0, model)
    return dynamics.evolve(state, h_c, COIN_AREA,
                           cache_key=_cache_key("prep", params, model))


def quantum_walk(config: WalkConfig) -> WalkResult:
    """Coherent walk; snapshot i is the state after i full steps."""
    state = prepare_initial(config.params, config.model)
    (h_d, area_d, key_d), (h_c, area_c, key_c) = _walk_pulses(config)
    snapshots = [state]
    for step in range(config.n_steps):
        try:
            state = dynamics.evolve(state, h_d, area_d, cache_key=key_d)
            state = dynamics.evolve(state, h_c, area_c, cache_key=key_c)
        except Exception as exc:
            raise type(exc)(f"step {step + 1}: {exc}") from exc
        snapshots.append(state)
    return WalkResult(config, tuple(snapshots))


def reversed_walk(config: WalkConfig) -> WalkResult:
    """n_steps forward, then the exact inverse pulse sequence.

    Each reverse step undoes the most recent step: coin inverse first, then
    displacement inverse, both realized as pi-phase-shifted pulses. The
    result holds 2*n_steps + 1 snapshots; the last one should match the
    initial state.
    """
    forward = quantum_walk(config)
    state = forward.snapshots[-1]
    (h_d, area_d, key_d), (h_c, area_c, key_c) = _walk_pulses(config, reverse=True)
    snapshots = list(forward.snapshots)
    for step in range(config.n_steps):
        try:
            state = dynamics.evolve(state, h_c, area_c, cache_key=key_c)
            state = dynamics.evolve(state, h_d, area_d, cache_key=key_d)
        except Exception as exc:
            raise type(exc)(f"reverse step {step + 1}: {exc}") from exc
        snapshots.append(state)
    return WalkResult(config, tuple(snapshots))


def reversal_fidelity(result: WalkResult) -> float:
    """|<initial|final>|^2 of a reversed walk."""
    a = result.snapshots[0].amplitudes
    b = result.snapshots[-1].amplitudes
    return float(abs(np.vdot(a, b)) ** 2)


def recombine_spin(state: SpinMotionState, new_spin: str = "plus_z") -> MotionalEnsemble:
    """Incoherent recombination of the internal-state populations.

    Models optical pumping of all spin populations into a single level with
    negligible motional disturbance: the motional state becomes the mixture
    of the spin-branch wavefunctions weighted by the branch populations.
    new_spin names the spin state re-prepared afterwards for the probe
    ('plus_z' or 'plus_y'); it does not affect the returned mixture.
    """
    if new_spin not in ("plus_z", "plus_y"):
        raise ValueError(f"new_spin must be 'plus_z' or 'plus_y', got {new_spin!r}")
    branches = state.branch_matrix()
    members = []
    for row in branches:
        weight = float(np.real(np.vdot(row, row)))
        if weight > _BRANCH_CUTOFF:
            members.append((weight, row / np.sqrt(weight)))
    total = sum(w for w, _ in members)
    members = [(w / total, v) for w, v in members]
    return MotionalEnsemble(state.params, tuple(members))


def _spin_phase_column(phases: np.ndarray, params: HilbertParams) -> np.ndarray:
    """Per-trial diagonal of exp(i * phase * Sz / 2) on the full space.

    Shifting every pulse phase of one step by c conjugates its propagator
    with this diagonal, so a random-phase step costs two extra elementwise
    multiplies instead of a fresh eigendecomposition.
    """
    if params.n_ions == 1:
        mz = np.array([1.0, -1.0])
    else:
        mz = np.array([2.0, 0.0, 0.0, -2.0])
    per_spin = np.exp(0.5j * np.outer(mz, phases))          # (spin_dim, trials)
    return np.repeat(per_spin, params.motion_dim, axis=0)   # (dim, trials)


def _ensemble_from_trials(columns: np.ndarray, params: HilbertParams) -> MotionalEnsemble:
    """Uniform mixture over trial columns, each recombined over spin branches."""
    trials = columns.shape[1]
    branches = columns.T.reshape(trials, params.spin_dim, params.motion_dim)
    weights = np.sum(np.abs(branches) ** 2, axis=2) / trials
    members = []
    for t in range(trials):
        for s in range(params.spin_dim):
            w = float(weights[t, s])
            if w > _BRANCH_CUTOFF:
                members.append((w, branches[t, s] / np.linalg.norm(branches[t, s])))
    total = sum(w for w, _ in members)
    return MotionalEnsemble(params, tuple((w / total, v) for w, v in members))


def classical_walk(config: WalkConfig, threads: int = 1) -> WalkResult:
    """Phase-randomized walk, averaged over config.trials independent runs.

    Every step of every trial shifts the laser phase of both pulses of that
    step by one uniform random offset (the displacement-coin pair stays
    coherent within a step). Trials use generators spawned from the master
    seed, so results do not depend on batching or thread count. Snapshots
    are motional ensembles (spin recombined, uniform weight over trials).
    """
    p = config.params
    rng_seeds = np.random.SeedSequence(config.seed).spawn(config.trials)
    phases = np.empty((config.n_steps, config.trials))
    for t, ss in enumerate(rng_seeds):
        phases[:, t] = np.random.default_rng(ss).uniform(0.0, 2.0 * np.pi, config.n_steps)

    initial = prepare_initial(p, config.model)
    (h_d, area_d, key_d), (h_c, area_c, key_c) = _walk_pulses(config)
    snapshots = [_ensemble_from_trials(initial.amplitudes[:, None], p)]

    def run_block(cols: np.ndarray, block_phases: np.ndarray) -> list:
        states = np.repeat(cols, block_phases.shape[1], axis=1)
        out = []
        for step in range(config.n_steps):
            diag = _spin_phase_column(block_phases[step], p)
            states = diag.conj() * states
            states = dynamics.apply_propagator(h_d, area_d, states, cache_key=key_d)
            states = dynamics.apply_propagator(h_c, area_c, states, cache_key=key_c)
            states = diag * states
            out.append(states.copy())
        return out

    if threads <= 1:
        per_step = run_block(initial.amplitudes[:, None], phases)
    else:
        bounds = np.array_split(np.arange(config.trials), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_block, initial.amplitudes[:, None], phases[:, idx])
                       for idx in bounds if idx.size]
            blocks = [f.result() for f in futures]
        per_step = [np.concatenate([b[s] for b in blocks], axis=1)
                    for s in range(config.n_steps)]

    for step_states in per_step:
        snapshots.append(_ensemble_from_trials(step_states, p))
    return WalkResult(config, tuple(snapshots))


def two_ion_walk(config: WalkConfig) -> WalkResult:
    """Collective-spin walk of two ions on the center-of-mass mode."""
    if config.params.n_ions != 2:
        raise ValueError("two_ion_walk requires params.n_ions == 2")
    return quantum_walk(config)


# ---------------------------------------------------------------- summaries

def second_moment_x(obj) -> float:
    """<x_hat^2> of a SpinMotionState or MotionalEnsemble."""
    if isinstance(obj, SpinMotionState):
        return float(np.sum(np.abs(apply_position(obj.branch_matrix())) ** 2))
    mat = obj.member_matrix().T
    return float(np.dot(obj.weights(), np.sum(np.abs(apply_position(mat)) ** 2, axis=1)))


def second_moment_q(obj) -> float:
    """<q_hat^2> with q_hat = 2*pi_hat (ground state gives 1)."""
    if isinstance(obj, SpinMotionState):
        return float(np.sum(np.abs(apply_momentum(obj.branch_matrix())) ** 2))
    mat = obj.member_matrix().T
    return float(np.dot(obj.weights(), np.sum(np.abs(apply_momentum(mat)) ** 2, axis=1)))


def width_x(obj) -> float:
    """Root-mean-square position in ground-state widths."""
    return float(np.sqrt(second_moment_x(obj)))


def width_p(obj) -> float:
    """Root-mean-square momentum in ground-state momentum widths."""
    return float(np.sqrt(second_moment_q(obj)))


def mean_phonon(obj) -> float:
    """<n> = (<x^2> + <q^2> - 2) / 4."""
    return 0.25 * (second_moment_x(obj) + second_moment_q(obj) - 2.0)


def mean_abs_position(ensemble: MotionalEnsemble, spacing: float = 0.05) -> float:
    """Mean |x|, the width measure matching the 2 s^2 N / pi random-walk law."""
    extent = np.sqrt(second_moment_x(ensemble)) * 2.0 + 8.0
    grid = np.arange(-extent, extent + spacing / 2, spacing)
    dens = exact_position_density(ensemble, grid)
    return float(np.sum(np.abs(grid) * dens) * spacing)


def classical_width_reference(n_steps: int, step_size: float) -> float:
    """Random-walk width law sqrt(2 s^2 N / pi + 1) in ground-state widths."""
    return float(np.sqrt(2.0 * step_size ** 2 * n_steps / np.pi + 1.0))


def snapshot_ensemble(result: WalkResult, step: int) -> MotionalEnsemble:
    """Motional ensemble of a snapshot (recombining the spin if needed)."""
    snap = result.snapshots[step]
    if isinstance(snap, MotionalEnsemble):
        return snap
    return recombine_spin(snap)


def snapshot_density(result: WalkResult, step: int, grid: np.ndarray) -> np.ndarray:
    return exact_position_density(snapshot_ensemble(result, step), grid)
