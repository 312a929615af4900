"""Laser-ion Hamiltonians at four fidelity levels and exact unitary evolution.

All Hamiltonians are dimensionless: the bichromatic (spin-dependent force)
Hamiltonian is returned in units of eta*Omega, the carrier Hamiltonian in
units of Omega. Evolution under a Hamiltonian H for a dimensionless pulse
area theta applies exp(-i * theta * H). With these conventions the
displacement pulse of area d/2 shifts the position of a sigma_phi = +1
eigenstate by +d ground-state widths, and the coin is a carrier pulse of
area pi/4.
"""

from __future__ import annotations

import dataclasses
import enum
import threading

import numpy as np
from scipy.special import eval_genlaguerre, eval_laguerre

from .fock import HilbertParams, LeakyStateError, SpinMotionState, ladder_operators

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

HERMITICITY_TOL = 1e-10


class FidelityModel(str, enum.Enum):
    """Physical fidelity of the light-motion coupling.

    LAMB_DICKE  first order in eta (linear spin-dependent force)
    THIRD_ORDER resonant terms up to eta^3 (x quadrature only)
    X_DIAGONAL  third-order with n replaced by x^2/4, diagonal in position
                (x quadrature only)
    ALL_ORDER   exact sideband matrix elements between Fock neighbours;
                carrier couplings proportional to L_n(eta^2)
    """

    LAMB_DICKE = "lamb_dicke"
    THIRD_ORDER = "third_order"
    X_DIAGONAL = "x_diagonal"
    ALL_ORDER = "all_order"


class PulseKind(str, enum.Enum):
    BICHROMATIC = "bichromatic"
    CARRIER = "carrier"


@dataclasses.dataclass(frozen=True)
class PulseSpec:
    """One laser pulse, either by dimensionless rate or by lab parameters.

    For a bichromatic pulse `rabi` is the product eta * Omega (an inverse
    time); for a carrier pulse it is Omega itself. Alternatively supply
    (omega [rad/s], eta, tau [s]) and the dimensionless area is derived.
    Phases are stored reduced modulo 2 pi.
    """

    kind: PulseKind = PulseKind.BICHROMATIC
    model: FidelityModel = FidelityModel.LAMB_DICKE
    phi_plus: float = 0.0
    phi_minus: float = 0.0
    rabi: float | None = None
    omega: float | None = None
    eta: float | None = None
    tau: float | None = None

    def __post_init__(self):
        if self.tau is not None and self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.rabi is None and (self.omega is None or self.tau is None):
            raise ValueError("supply either rabi or (omega, tau)")
        if (self.rabi is None and self.kind is PulseKind.BICHROMATIC
                and self.eta is None):
            raise ValueError("bichromatic pulses from lab parameters need eta")
        two_pi = 2.0 * np.pi
        object.__setattr__(self, "phi_plus", float(self.phi_plus) % two_pi)
        object.__setattr__(self, "phi_minus", float(self.phi_minus) % two_pi)

    @property
    def area(self) -> float:
        """Dimensionless pulse area theta in U = exp(-i theta H).

        With the Hamiltonian conventions of this module this is
        eta * Omega * tau for bichromatic pulses and Omega * tau / 2 on the
        carrier (a pi/2 carrier pulse has area pi/4).
        """
        if self.kind is PulseKind.BICHROMATIC:
            if self.rabi is not None:
                if self.tau is None:
                    raise ValueError("rabi-specified pulses still need tau")
                return self.rabi * self.tau
            return self.eta * self.omega * self.tau
        rate = self.rabi if self.rabi is not None else self.omega
        if self.tau is None:
            raise ValueError("rabi-specified pulses still need tau")
        return 0.5 * rate * self.tau

    @property
    def displacement(self) -> float:
        """Step size in ground-state widths per unit spin eigenvalue."""
        if self.kind is not PulseKind.BICHROMATIC:
            raise ValueError("only bichromatic pulses displace")
        return 2.0 * self.area

    def hamiltonian(self, params: HilbertParams) -> np.ndarray:
        if self.kind is PulseKind.BICHROMATIC:
            return bichromatic_hamiltonian(params, self.phi_plus,
                                           self.phi_minus, self.model)
        return carrier_hamiltonian(params, self.phi_plus, self.model)


def sigma_phi(phi: float) -> np.ndarray:
    """Equatorial spin operator sigma_x cos(phi) - sigma_y sin(phi)."""
    return SIGMA_X * np.cos(phi) - SIGMA_Y * np.sin(phi)


def collective_spin(op: np.ndarray, n_ions: int) -> np.ndarray:
    """Sum of the single-ion operator over all ions (2^n_ions dimensional)."""
    if n_ions == 1:
        return op
    eye = np.eye(2, dtype=complex)
    return np.kron(op, eye) + np.kron(eye, op)


def _motional_quadrature(params: HilbertParams, phi_minus: float,
                         model: FidelityModel) -> np.ndarray:
    """Motional factor of the bichromatic Hamiltonian, in eta*Omega units."""
    a, adag = ladder_operators(params)
    eta = params.eta
    if model is FidelityModel.LAMB_DICKE:
        return (a + adag) * np.cos(phi_minus) + 1j * (adag - a) * np.sin(phi_minus)
    if model is FidelityModel.ALL_ORDER:
        n = np.arange(params.n_max)
        coupling = np.exp(-0.5 * eta ** 2) * eval_genlaguerre(n, 1, eta ** 2) / np.sqrt(n + 1.0)
        m = np.zeros((params.motion_dim, params.motion_dim), dtype=complex)
        m[n + 1, n] = coupling * np.exp(1j * phi_minus)
        m[n, n + 1] = coupling * np.exp(-1j * phi_minus)
        return m
    # the eta^2 corrections are only defined on the x quadrature
    if not np.isclose(np.sin(phi_minus), 0.0, atol=1e-12):
        raise ValueError(
            f"model {model.value} supports only phi_minus in {{0, pi}}, got {phi_minus}"
        )
    sign = float(np.cos(phi_minus))
    x = sign * (a + adag)
    if model is FidelityModel.THIRD_ORDER:
        nop = adag @ a
        return x - (eta ** 2 / 4.0) * (x @ nop + nop @ x + np.eye(params.motion_dim))
    if model is FidelityModel.X_DIAGONAL:
        x2 = x @ x
        return x @ (np.eye(params.motion_dim) - (eta ** 2 / 8.0) * (x2 + np.eye(params.motion_dim)))
    raise ValueError(f"unknown model {model}")


def bichromatic_hamiltonian(params: HilbertParams, phi_plus: float,
                            phi_minus: float, model: FidelityModel) -> np.ndarray:
    """Spin-dependent displacement Hamiltonian on spin (x) motion, eta*Omega = 1.

    In the Lamb-Dicke model this is
        (sigma_x cos(phi+) - sigma_y sin(phi+)) (x) [x_hat cos(phi-) + 2 pi_hat sin(phi-)]
    summed over ions; the other models replace the motional factor by the
    corresponding corrected coupling.
    """
    spin = collective_spin(sigma_phi(phi_plus), params.n_ions)
    h = np.kron(spin, _motional_quadrature(params, phi_minus, model))
    return 0.5 * (h + h.conj().T)


def carrier_hamiltonian(params: HilbertParams, phase: float, model: FidelityModel,
                        include_debye_waller: bool = False) -> np.ndarray:
    """Carrier (spin-only resonance) Hamiltonian, in units of Omega_0.

    For ALL_ORDER the coupling of level n carries the factor L_n(eta^2);
    include_debye_waller additionally multiplies by exp(-eta^2/2) (whether
    that factor is absorbed in Omega_0 is a calibration convention; it
    rescales the time axis only).
    """
    spin = collective_spin(sigma_phi(phase), params.n_ions)
    if model is FidelityModel.ALL_ORDER:
        n = np.arange(params.motion_dim)
        diag = eval_laguerre(n, params.eta ** 2).astype(complex)
        if include_debye_waller:
            diag *= np.exp(-0.5 * params.eta ** 2)
        motion = np.diag(diag)
    else:
        motion = np.eye(params.motion_dim, dtype=complex)
    return np.kron(spin, motion)


def carrier_coupling_ratios(params: HilbertParams) -> np.ndarray:
    """Rabi frequencies Omega_{n,n}/Omega_0 = L_n(eta^2) on the carrier."""
    return eval_laguerre(np.arange(params.motion_dim), params.eta ** 2)


# eigendecompositions are reused across pulses; build once, read many
_EIG_CACHE: dict = {}
_EIG_LOCK = threading.Lock()
_EIG_CACHE_MAX = 8


def _eig_for(h: np.ndarray, key=None):
    if key is None:
        key = hash(h.tobytes())
    with _EIG_LOCK:
        hit = _EIG_CACHE.get(key)
    if hit is not None:
        return hit
    herm_defect = np.max(np.abs(h - h.conj().T))
    if herm_defect > HERMITICITY_TOL * max(1.0, np.max(np.abs(h))):
        raise ValueError(f"Hamiltonian is not Hermitian (defect {herm_defect:.2e})")
    vals, vecs = np.linalg.eigh(h)
    with _EIG_LOCK:
        if len(_EIG_CACHE) >= _EIG_CACHE_MAX:
            _EIG_CACHE.pop(next(iter(_EIG_CACHE)))
        _EIG_CACHE[key] = (vals, vecs)
    return vals, vecs


def propagator(h: np.ndarray, area: float, cache_key=None) -> np.ndarray:
    """Dense unitary exp(-i * area * H) via Hermitian eigendecomposition."""
    vals, vecs = _eig_for(h, cache_key)
    return (vecs * np.exp(-1j * area * vals)) @ vecs.conj().T


def apply_propagator(h: np.ndarray, area: float, amplitudes: np.ndarray,
                     cache_key=None) -> np.ndarray:
    """Apply exp(-i * area * H) to one state vector or a stack of columns."""
    vals, vecs = _eig_for(h, cache_key)
    return vecs @ (np.exp(-1j * area * vals)[:, None] * (vecs.conj().T @ amplitudes)
                   if amplitudes.ndim == 2
                   else np.exp(-1j * area * vals) * (vecs.conj().T @ amplitudes))


def evolve(state: SpinMotionState, h: np.ndarray, area: float,
           allow_leaky: bool = False, cache_key=None) -> SpinMotionState:
    """Evolve a state by exp(-i * area * H), re-checking truncation health."""
    out = apply_propagator(h, area, state.amplitudes, cache_key)
    new = SpinMotionState(state.params, out, leaky=True)
    tail = new.tail_population()
    if tail > 1e-6 and not allow_leaky:
        raise LeakyStateError(
            f"evolution pushed {tail:.2e} population into the top Fock levels; "
            f"increase n_max (currently {state.params.n_max})"
        )
    return SpinMotionState(state.params, out, leaky=allow_leaky or state.leaky)


def displacement_propagator(d: float, params: HilbertParams, phi_plus: float = 0.0,
                            model: FidelityModel = FidelityModel.LAMB_DICKE) -> np.ndarray:
    """Unitary displacing each sigma_phi eigenvalue-m branch by m*d in position.

    Convenience wrapper: bichromatic pulse at phi_minus = pi/2 applied for
    dimensionless area d/2.
    """
    h = bichromatic_hamiltonian(params, phi_plus, np.pi / 2.0, model)
    return propagator(h, 0.5 * d)


def step_size(eta: float, omega: float, tau: float) -> float:
    """Displacement step d = 2 * eta * Omega * tau (Omega in rad/s, tau in s)."""
    return 2.0 * eta * omega * tau
