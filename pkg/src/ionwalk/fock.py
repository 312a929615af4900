"""Truncated-Fock-space linear algebra for a single motional mode.

Conventions (dimensionless throughout):
    position  x_hat = a + a'          (units of the ground-state size)
    momentum  pi_hat = i(a' - a)/2    (units of hbar / ground-state size)
so [x_hat, pi_hat] = i, <0|x_hat^2|0> = 1 and <0|pi_hat^2|0> = 1/4.
Momentum *widths* are usually quoted in units of the ground-state momentum
spread, i.e. for the operator q_hat = 2*pi_hat with <0|q_hat^2|0> = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TAIL_FRACTION = 0.05      # top fraction of Fock levels watched for leakage
TAIL_TOLERANCE = 1e-6
NORM_TOLERANCE = 1e-9


class TruncationError(ValueError):
    """State cannot be represented faithfully at the requested n_max."""


class LeakyStateError(RuntimeError):
    """Population reached the top of the truncated Fock space."""


class GridCoverageError(ValueError):
    """Position grid does not cover the support of the state."""


@dataclass(frozen=True)
class HilbertParams:
    """Truncation level, Lamb-Dicke parameter and ion count of the model."""

    n_max: int
    eta: float = 0.06
    n_ions: int = 1

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"eta must be in (0, 1), got {self.eta}")
        if self.n_ions not in (1, 2):
            raise ValueError(f"n_ions must be 1 or 2, got {self.n_ions}")

    @property
    def motion_dim(self) -> int:
        return self.n_max + 1

    @property
    def spin_dim(self) -> int:
        return 2 ** self.n_ions

    @property
    def dim(self) -> int:
        return self.spin_dim * self.motion_dim


def ladder_operators(params: HilbertParams) -> tuple[np.ndarray, np.ndarray]:
    """Annihilation and creation operators on the truncated motional space."""
    n = np.arange(1, params.motion_dim)
    a = np.zeros((params.motion_dim, params.motion_dim), dtype=complex)
    a[n - 1, n] = np.sqrt(n)
    return a, a.conj().T


def number_operator(params: HilbertParams) -> np.ndarray:
    return np.diag(np.arange(params.motion_dim).astype(complex))


def quadrature_operators(params: HilbertParams) -> tuple[np.ndarray, np.ndarray]:
    """Position x_hat = a + a' and momentum pi_hat = i(a' - a)/2."""
    a, adag = ladder_operators(params)
    return a + adag, 0.5j * (adag - a)


def fock_state(n: int, params: HilbertParams) -> np.ndarray:
    if not 0 <= n <= params.n_max:
        raise ValueError(f"Fock index {n} outside [0, {params.n_max}]")
    vec = np.zeros(params.motion_dim, dtype=complex)
    vec[n] = 1.0
    return vec


def coherent_state(alpha: complex, params: HilbertParams) -> np.ndarray:
    """Coherent state |alpha>; mean position 2*Re(alpha), <n> = |alpha|^2."""
    mod = abs(alpha)
    if mod ** 2 + 6.0 * mod >= params.n_max:
        raise TruncationError(
            f"coherent state alpha={alpha} needs n_max > {mod**2 + 6*mod:.1f}, "
            f"got {params.n_max}"
        )
    vec = np.empty(params.motion_dim, dtype=complex)
    vec[0] = np.exp(-0.5 * mod ** 2)
    for n in range(1, params.motion_dim):
        vec[n] = vec[n - 1] * alpha / np.sqrt(n)
    return vec


def _tail_levels(motion_dim: int) -> int:
    return max(1, int(np.ceil(TAIL_FRACTION * motion_dim)))


@dataclass(frozen=True)
class SpinMotionState:
    """Pure state on (spin tensor motion), amplitudes in kron(spin, motion) order."""

    params: HilbertParams
    amplitudes: np.ndarray
    leaky: bool = False

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.params.dim,):
            raise ValueError(
                f"amplitude vector has shape {amps.shape}, expected ({self.params.dim},)"
            )
        object.__setattr__(self, "amplitudes", amps)
        nrm = np.linalg.norm(amps)
        if abs(nrm - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"state norm {nrm!r} deviates from 1 beyond {NORM_TOLERANCE}")
        if not self.leaky and self.tail_population() > TAIL_TOLERANCE:
            raise LeakyStateError(
                f"tail population {self.tail_population():.2e} exceeds {TAIL_TOLERANCE}; "
                f"increase n_max (currently {self.params.n_max})"
            )

    @classmethod
    def from_product(cls, spin: np.ndarray, motion: np.ndarray,
                     params: HilbertParams, leaky: bool = False) -> "SpinMotionState":
        return cls(params, np.kron(np.asarray(spin, dtype=complex), motion), leaky=leaky)

    def branch_matrix(self) -> np.ndarray:
        """Amplitudes reshaped to (spin_dim, motion_dim)."""
        return self.amplitudes.reshape(self.params.spin_dim, self.params.motion_dim)

    def tail_population(self) -> float:
        branches = self.branch_matrix()
        k = _tail_levels(self.params.motion_dim)
        return float(np.sum(np.abs(branches[:, -k:]) ** 2))

    def motional_populations(self) -> np.ndarray:
        """Fock populations P_n, traced over spin."""
        return np.sum(np.abs(self.branch_matrix()) ** 2, axis=0)

    def spin_density(self) -> np.ndarray:
        """Reduced spin density matrix."""
        b = self.branch_matrix()
        return b @ b.conj().T


@dataclass(frozen=True)
class MotionalEnsemble:
    """Weighted mixture of pure motional states (weights sum to 1)."""

    params: HilbertParams
    members: tuple = field(default_factory=tuple)

    def __post_init__(self):
        members = tuple((float(w), np.asarray(v, dtype=complex)) for w, v in self.members)
        object.__setattr__(self, "members", members)
        if not members:
            raise ValueError("ensemble needs at least one member")
        weights = np.array([w for w, _ in members])
        if np.any(weights < -1e-12):
            raise ValueError("ensemble weights must be nonnegative")
        if abs(weights.sum() - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"ensemble weights sum to {weights.sum()!r}, expected 1")
        for _, vec in members:
            if vec.shape != (self.params.motion_dim,):
                raise ValueError("member dimension does not match params")
            if abs(np.linalg.norm(vec) - 1.0) > NORM_TOLERANCE:
                raise ValueError("ensemble members must be normalized")

    @classmethod
    def from_pure(cls, vec: np.ndarray, params: HilbertParams) -> "MotionalEnsemble":
        return cls(params, ((1.0, np.asarray(vec, dtype=complex)),))

    def member_matrix(self) -> np.ndarray:
        """Member vectors stacked as columns, shape (motion_dim, n_members)."""
        return np.column_stack([v for _, v in self.members])

    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.members])

    def fock_populations(self) -> np.ndarray:
        mat = np.abs(self.member_matrix()) ** 2
        return mat @ self.weights()

    def mean_phonon(self) -> float:
        pops = self.fock_populations()
        return float(np.dot(np.arange(len(pops)), pops))


def apply_position(arr: np.ndarray) -> np.ndarray:
    """Apply x_hat = a + a' along the last (Fock) axis of an amplitude array."""
    arr = np.asarray(arr, dtype=complex)
    n = np.arange(arr.shape[-1])
    out = np.zeros_like(arr)
    out[..., 1:] += np.sqrt(n[1:]) * arr[..., :-1]       # a' part
    out[..., :-1] += np.sqrt(n[1:]) * arr[..., 1:]       # a part
    return out


def apply_momentum(arr: np.ndarray) -> np.ndarray:
    """Apply q_hat = i(a' - a) = 2*pi_hat along the last (Fock) axis."""
    arr = np.asarray(arr, dtype=complex)
    n = np.arange(arr.shape[-1])
    out = np.zeros_like(arr)
    out[..., 1:] += 1j * np.sqrt(n[1:]) * arr[..., :-1]
    out[..., :-1] += -1j * np.sqrt(n[1:]) * arr[..., 1:]
    return out


def hermite_functions(n_max: int, x: np.ndarray) -> np.ndarray:
    """Oscillator eigenfunctions phi_n(x), n = 0..n_max, on the given points.

    Normalized so that integral phi_n^2 dx = 1 with the variance-1 ground
    state phi_0(x) = (2*pi)^(-1/4) exp(-x^2/4). Evaluated with the stable
    normalized three-term recurrence; a per-point power-of-two exponent is
    carried so that the classically forbidden region does not underflow even
    for n ~ 1000 at |x| ~ 60.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1, x.size))

    # seed in mantissa/exponent form: phi_0 = exp(log0), log0 can be << -708
    log0 = -0.25 * x ** 2 - 0.25 * np.log(2.0 * np.pi)
    expo = np.floor(log0 / np.log(2.0)).astype(int)
    prev = np.exp(log0 - expo * np.log(2.0))   # mantissa in [1, 2)
    out[0] = np.ldexp(prev, expo)
    if n_max == 0:
        return out

    curr = x * prev
    out[1] = np.ldexp(curr, expo)
    for n in range(1, n_max):
        nxt = (x / np.sqrt(n + 1.0)) * curr - np.sqrt(n / (n + 1.0)) * prev
        # renormalize the shared exponent when the mantissa drifts too far
        mag = np.maximum(np.abs(nxt), np.abs(curr))
        drift = np.where(mag > 0, np.frexp(mag)[1], 0)
        big = np.abs(drift) > 200
        if np.any(big):
            shift = np.where(big, drift, 0)
            nxt = np.ldexp(nxt, -shift)
            curr = np.ldexp(curr, -shift)
            expo = expo + shift
        prev, curr = curr, nxt
        out[n + 1] = np.ldexp(curr, expo)
    return out


def wavefunction_on_grid(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Position wavefunction sum_n c_n phi_n(x) of a motional state vector."""
    phi = hermite_functions(len(coeffs) - 1, np.asarray(x, dtype=float))
    return coeffs @ phi


def exact_position_density(ensemble: MotionalEnsemble, grid: np.ndarray,
                           check_coverage: bool = True) -> np.ndarray:
    """Exact probability density of the ensemble on a uniform position grid."""
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2:
        raise ValueError("grid needs at least two points")
    h = grid[1] - grid[0]
    if not np.allclose(np.diff(grid), h, rtol=0, atol=1e-9 * abs(h)):
        raise ValueError("grid must be uniformly spaced")
    phi = hermite_functions(ensemble.params.n_max, grid)
    amps = ensemble.member_matrix().T @ phi      # (members, npoints)
    dens = ensemble.weights() @ (np.abs(amps) ** 2)
    mass = float(np.sum(dens) * h)
    if check_coverage and mass < 0.999:
        raise GridCoverageError(
            f"grid [{grid[0]:g}, {grid[-1]:g}] captures only {mass:.6f} of the state"
        )
    return dens
