"""
Exact Statevector Simulation of the U3/CU3 Ring Ansatz

Qubit `q` is bit `q` of the amplitude index (qubit 0 is least significant).
Internally the amplitude vector is viewed as an `n`-axis tensor of shape
`(2, ) * n` in C order, so qubit `q` lives on tensor axis `n - 1 - q`.
"""
from enum import Enum
from functools import reduce
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from pyderive import dataclass, field

from .exceptions import ConfigError, InvariantError, OracleError

#** Variables **#
__all__ = [
    'MAX_QUBITS',
    'ORACLE_MAX_QUBITS',

    'GateKind',
    'GateAngles',
    'Gate',
    'QuantumState',
    'AnsatzSpec',

    'zero_state',
    'u3_matrix',
    'u3_jacobian',
    'apply_u3',
    'apply_cu3',
    'run_ansatz',
    'probabilities',
    'ansatz_backward',
    'dense_unitary_oracle',
]

#: memory guard for statevector allocation
MAX_QUBITS = 24

#: memory guard for the dense unitary test oracle
ORACLE_MAX_QUBITS = 5

#: angles accepted anywhere a gate parameterization is expected
Angles = Union['GateAngles', Sequence[float], np.ndarray]

IDENTITY  = np.eye(2, dtype=np.complex128)
PROJECT_0 = np.array([[1, 0], [0, 0]], dtype=np.complex128)
PROJECT_1 = np.array([[0, 0], [0, 1]], dtype=np.complex128)

#** Classes **#

class GateKind(str, Enum):
    U3  = 'u3'
    CU3 = 'cu3'

class GateAngles(NamedTuple):
    """
    U3 Rotation Angles (radians, unwrapped)
    """
    alpha: float
    phi:   float
    lam:   float

class Gate(NamedTuple):
    """
    Single Gate Placement within an Ansatz Layout
    """
    kind:    GateKind
    target:  int
    control: Optional[int]
    offset:  int
    """index of the gate's first angle within the flat beta vector"""

@dataclass(slots=True)
class QuantumState:
    """
    Pure N-Qubit State as a Flat Complex Amplitude Vector
    """
    n_qubits:   int
    amplitudes: np.ndarray

    def __post_init__(self):
        size = 1 << self.n_qubits
        self.amplitudes = np.ascontiguousarray(
            self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (size, ):
            raise InvariantError(
                f'amplitudes shape {self.amplitudes.shape} != ({size}, )')

    def tensor(self) -> np.ndarray:
        """
        view amplitudes as an `n`-axis tensor sharing the same memory
        """
        return self.amplitudes.reshape((2, ) * self.n_qubits)

    def norm(self) -> float:
        """
        squared norm of the amplitude vector (1.0 for a valid state)
        """
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def copy(self) -> 'QuantumState':
        return QuantumState(self.n_qubits, self.amplitudes.copy())

@dataclass(slots=True)
class AnsatzSpec:
    """
    Blocked Variational Circuit: U3 on Every Qubit, then a Ring of CU3

    A single-qubit ansatz has no ring pair, so the CU3 angle slots of each
    block are still allocated but drive no gate.
    """
    n_qubits: int
    n_blocks: int
    layout:   List[Gate] = field(init=False, default_factory=list)

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ConfigError(
                f'n_qubits={self.n_qubits} outside 1..{MAX_QUBITS}')
        if self.n_blocks < 1:
            raise ConfigError(f'n_blocks={self.n_blocks} must be >= 1')
        n = self.n_qubits
        for block in range(self.n_blocks):
            base = block * n * 6
            for qubit in range(n):
                gate = Gate(GateKind.U3, qubit, None, base + qubit * 3)
                self.layout.append(gate)
            if n < 2:
                continue
            for qubit in range(n):
                offset = base + n * 3 + qubit * 3
                gate   = Gate(GateKind.CU3, (qubit + 1) % n, qubit, offset)
                self.layout.append(gate)

    @property
    def n_params(self) -> int:
        return self.n_blocks * self.n_qubits * 6

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    def check_beta(self, beta: np.ndarray) -> np.ndarray:
        """
        validate and normalize a flat angle vector for this layout

        :param beta: flat trainable angle vector
        :return:     float64 copy-free view of beta
        """
        beta = np.asarray(beta, dtype=np.float64)
        if beta.shape != (self.n_params, ):
            raise ConfigError(
                f'beta length mismatch: expected {self.n_params} '
                f'(= {self.n_blocks} blocks x {self.n_qubits} qubits x 6), '
                f'got {beta.size}')
        return beta

#** Functions **#

def _axis(n_qubits: int, qubit: int) -> int:
    return n_qubits - 1 - qubit

def _check_qubit(n_qubits: int, qubit: int):
    if not 0 <= qubit < n_qubits:
        raise InvariantError(f'qubit {qubit} outside 0..{n_qubits - 1}')

def _control_slice(n_qubits: int, control: int) -> Tuple:
    index: List = [slice(None)] * n_qubits
    index[_axis(n_qubits, control)] = 1
    return tuple(index)

def _target_axis(n_qubits: int, control: int, target: int) -> int:
    # control axis is removed by `_control_slice`
    axis = _axis(n_qubits, target)
    return axis - 1 if axis > _axis(n_qubits, control) else axis

def _apply_matrix(tensor: np.ndarray, matrix: np.ndarray, axis: int):
    out = np.tensordot(matrix, tensor, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)

def _apply_single(tensor: np.ndarray, n: int, qubit: int, matrix: np.ndarray):
    axis = _axis(n, qubit)
    tensor[...] = _apply_matrix(tensor, matrix, axis)

def _apply_controlled(tensor: np.ndarray,
    n: int, control: int, target: int, matrix: np.ndarray):
    index = _control_slice(n, control)
    axis  = _target_axis(n, control, target)
    tensor[index] = _apply_matrix(tensor[index], matrix, axis)

def zero_state(n_qubits: int) -> QuantumState:
    """
    allocate the all-zero computational basis state |0...0>

    :param n_qubits: number of qubits (1..24)
    :return:         new quantum state
    """
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigError(f'n_qubits={n_qubits} outside 1..{MAX_QUBITS}')
    amplitudes    = np.zeros(1 << n_qubits, dtype=np.complex128)
    amplitudes[0] = 1.0
    return QuantumState(n_qubits, amplitudes)

def u3_matrix(g: Angles) -> np.ndarray:
    """
    build the 2x2 unitary of a U3 rotation

    :param g: (alpha, phi, lambda) angles
    :return:  complex 2x2 matrix
    """
    alpha, phi, lam = (float(v) for v in g)
    cos, sin = np.cos(alpha / 2), np.sin(alpha / 2)
    return np.array([
        [cos, -np.exp(1j * lam) * sin],
        [np.exp(1j * phi) * sin, np.exp(1j * (phi + lam)) * cos],
    ], dtype=np.complex128)

def u3_jacobian(g: Angles) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    partial derivatives of `u3_matrix` for alpha, phi and lambda

    :param g: (alpha, phi, lambda) angles
    :return:  three complex 2x2 matrices in angle order
    """
    alpha, phi, lam = (float(v) for v in g)
    cos, sin = np.cos(alpha / 2), np.sin(alpha / 2)
    e_phi, e_lam, e_both = \
        np.exp(1j * phi), np.exp(1j * lam), np.exp(1j * (phi + lam))
    d_alpha = 0.5 * np.array([
        [-sin, -e_lam * cos],
        [e_phi * cos, -e_both * sin],
    ], dtype=np.complex128)
    d_phi = np.array([
        [0, 0],
        [1j * e_phi * sin, 1j * e_both * cos],
    ], dtype=np.complex128)
    d_lam = np.array([
        [0, -1j * e_lam * sin],
        [0, 1j * e_both * cos],
    ], dtype=np.complex128)
    return d_alpha, d_phi, d_lam

def apply_u3(state: QuantumState, qubit: int, g: Angles) -> QuantumState:
    """
    apply a U3 rotation to a single qubit (in place)

    :param state: quantum state to mutate
    :param qubit: target qubit index
    :param g:     gate angles
    :return:      the same (mutated) state
    """
    _check_qubit(state.n_qubits, qubit)
    _apply_single(state.tensor(), state.n_qubits, qubit, u3_matrix(g))
    return state

def apply_cu3(state: QuantumState,
    control: int, target: int, g: Angles) -> QuantumState:
    """
    apply U3 to `target` within the subspace where `control` is 1 (in place)

    :param state:   quantum state to mutate
    :param control: control qubit index
    :param target:  target qubit index
    :param g:       gate angles
    :return:        the same (mutated) state
    """
    _check_qubit(state.n_qubits, control)
    _check_qubit(state.n_qubits, target)
    if control == target:
        raise InvariantError(f'control and target are both qubit {control}')
    n = state.n_qubits
    _apply_controlled(state.tensor(), n, control, target, u3_matrix(g))
    return state

def run_ansatz(spec: AnsatzSpec, beta: np.ndarray) -> QuantumState:
    """
    simulate the full ansatz layout starting from |0...0>

    :param spec: circuit layout
    :param beta: flat angle vector in layout order
    :return:     final quantum state
    """
    beta  = spec.check_beta(beta)
    state = zero_state(spec.n_qubits)
    for gate in spec.layout:
        angles = beta[gate.offset:gate.offset + 3]
        if gate.kind is GateKind.U3:
            apply_u3(state, gate.target, angles)
        else:
            apply_cu3(state, gate.control, gate.target, angles)
    return state

def probabilities(state: QuantumState) -> np.ndarray:
    """
    computational basis measurement probabilities |a_i|^2

    :param state: quantum state
    :return:      real vector of length 2^n
    """
    amps = state.amplitudes
    return amps.real ** 2 + amps.imag ** 2

def ansatz_backward(spec: AnsatzSpec,
    beta:   np.ndarray,
    grad_p: np.ndarray,
    state:  Optional[QuantumState] = None,
) -> np.ndarray:
    """
    adjoint reverse sweep: gradient of L w.r.t. beta given dL/dp

    the final state is un-computed gate by gate with inverse gates while the
    adjoint vector `grad_p * psi` is carried backwards alongside it.

    :param spec:   circuit layout
    :param beta:   flat angle vector
    :param grad_p: dL/dp for every basis probability
    :param state:  final state of `run_ansatz(spec, beta)` if already known
    :return:       dL/dbeta in layout order
    """
    beta   = spec.check_beta(beta)
    grad_p = np.asarray(grad_p, dtype=np.float64)
    if grad_p.shape != (spec.dim, ):
        raise ConfigError(
            f'grad_p length mismatch: expected {spec.dim}, got {grad_p.size}')
    if state is None:
        state = run_ansatz(spec, beta)
    n       = spec.n_qubits
    psi     = state.amplitudes.copy().reshape((2, ) * n)
    adjoint = (grad_p * state.amplitudes).reshape((2, ) * n)
    grads   = np.zeros(spec.n_params, dtype=np.float64)
    for gate in reversed(spec.layout):
        angles   = beta[gate.offset:gate.offset + 3]
        inverse  = u3_matrix(angles).conj().T
        jacobian = u3_jacobian(angles)
        if gate.kind is GateKind.U3:
            index = (Ellipsis, )
            axis  = _axis(n, gate.target)
        else:
            index = _control_slice(n, gate.control)
            axis  = _target_axis(n, gate.control, gate.target)
        psi[index] = _apply_matrix(psi[index], inverse, axis)
        sub_psi, sub_adj = psi[index], adjoint[index]
        for k, d_matrix in enumerate(jacobian):
            mu = _apply_matrix(sub_psi, d_matrix, axis)
            grads[gate.offset + k] = 2.0 * np.vdot(sub_adj, mu).real
        adjoint[index] = _apply_matrix(adjoint[index], inverse, axis)
    return grads

def _embed(n_qubits: int, factors: Dict[int, np.ndarray]) -> np.ndarray:
    # most significant qubit is the left-most kronecker factor
    ops = [factors.get(q, IDENTITY) for q in reversed(range(n_qubits))]
    return reduce(np.kron, ops)

def dense_unitary_oracle(spec: AnsatzSpec, beta: np.ndarray) -> np.ndarray:
    """
    full circuit unitary from explicit kronecker products (test oracle)

    :param spec: circuit layout (n_qubits <= 5)
    :param beta: flat angle vector
    :return:     2^n x 2^n complex unitary
    """
    if spec.n_qubits > ORACLE_MAX_QUBITS:
        raise OracleError(
            f'dense oracle refused for {spec.n_qubits} qubits '
            f'(limit {ORACLE_MAX_QUBITS})')
    beta  = spec.check_beta(beta)
    n     = spec.n_qubits
    total = np.eye(spec.dim, dtype=np.complex128)
    for gate in spec.layout:
        matrix = u3_matrix(beta[gate.offset:gate.offset + 3])
        if gate.kind is GateKind.U3:
            full = _embed(n, {gate.target: matrix})
        else:
            assert gate.control is not None
            full = _embed(n, {gate.control: PROJECT_0}) \
                + _embed(n, {gate.control: PROJECT_1, gate.target: matrix})
        total = full @ total
    return total
