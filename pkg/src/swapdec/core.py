"""Dense state-vector engine.

Amplitudes live in a flat complex array indexed by bitstring, qubit 0 being
the least significant bit. Qubits carry role labels (``"observer"``,
``"pointer"``, ``"xi3"``, ...) so higher layers never hard-code positions.

All public operations return new :class:`StateVector` objects; inputs are
never mutated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from math import cos, sin, sqrt
from typing import Iterable, Mapping

import numpy as np

MAX_QUBITS = 20
MAX_KEPT_QUBITS = 12
NORM_TOL = 1e-10
UNITARY_TOL = 1e-12
DEGENERATE_PROB = 1e-15

_SQRT2_INV = 1 / sqrt(2)

IDENTITY = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT2_INV


class QubitCapError(RuntimeError):
    """Raised when an operation would exceed the register or reduced-state cap."""


class NumericalError(ArithmeticError):
    pass


def rx(angle: float) -> np.ndarray:
    """Rotation about the x-axis by ``angle`` radians."""
    c, s = cos(angle / 2), sin(angle / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def bloch_ket(theta: float, phi: float = 0.0) -> np.ndarray:
    return np.array([cos(theta / 2), np.exp(1j * phi) * sin(theta / 2)], dtype=complex)


class StateVector:
    """Pure state of a labelled qubit register."""

    __slots__ = ("amplitudes", "labels")

    def __init__(self, amplitudes, labels: Mapping[str, int] | None = None, *, check: bool = True):
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        n = amps.size.bit_length() - 1
        if amps.size < 2 or 1 << n != amps.size:
            raise ValueError(f"amplitude count {amps.size} is not a power of two >= 2")
        if n > MAX_QUBITS:
            raise QubitCapError(f"{n} qubits requested, cap is {MAX_QUBITS}")
        if labels is None:
            labels = {f"q{i}": i for i in range(n)}
        labels = dict(labels)
        if check:
            if sorted(labels.values()) != list(range(n)):
                raise ValueError(f"labels {labels} are not a bijection onto 0..{n - 1}")
            norm = np.linalg.norm(amps)
            if abs(norm - 1) > NORM_TOL:
                raise ValueError(f"state is not normalized (norm={norm!r})")
        self.amplitudes = amps
        self.labels = labels

    @classmethod
    def _wrap(cls, amplitudes: np.ndarray, labels: dict[str, int]) -> StateVector:
        # internal constructor: caller guarantees shape, labels and norm
        obj = object.__new__(cls)
        obj.amplitudes = amplitudes
        obj.labels = labels
        return obj

    @classmethod
    def zeros(cls, roles: Iterable[str]) -> StateVector:
        """|0...0> with the given roles at positions 0, 1, 2, ..."""
        roles = list(roles)
        amps = np.zeros(1 << len(roles), dtype=complex)
        amps[0] = 1.0
        return cls(amps, {r: i for i, r in enumerate(roles)})

    @classmethod
    def product(cls, kets: Mapping[str, np.ndarray]) -> StateVector:
        """Tensor product of single-qubit kets, first role at position 0."""
        amps = np.ones(1, dtype=complex)
        for ket in kets.values():
            amps = np.kron(np.asarray(ket, dtype=complex), amps)
        return cls(amps / np.linalg.norm(amps), {r: i for i, r in enumerate(kets)})

    @property
    def num_qubits(self) -> int:
        return len(self.labels)

    def position(self, qubit: int | str) -> int:
        if isinstance(qubit, str):
            try:
                return self.labels[qubit]
            except KeyError:
                raise LookupError(f"no qubit labelled {qubit!r}") from None
        if not 0 <= qubit < self.num_qubits:
            raise IndexError(f"qubit position {qubit} out of range for {self.num_qubits} qubits")
        return int(qubit)

    def role(self, position: int) -> str:
        for r, p in self.labels.items():
            if p == position:
                return r
        raise IndexError(position)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> StateVector:
        return StateVector(self.amplitudes.copy(), self.labels, check=False)

    def tensor(self) -> np.ndarray:
        """View as an n-axis tensor; axis ``n - 1 - q`` belongs to qubit q."""
        return self.amplitudes.reshape((2,) * self.num_qubits)

    def __repr__(self) -> str:
        return f"StateVector(num_qubits={self.num_qubits}, labels={self.labels})"


@dataclass(frozen=True)
class DensityMatrix:
    entries: np.ndarray
    qubits: tuple[int, ...] = ()

    def __post_init__(self):
        rho = np.asarray(self.entries, dtype=complex)
        dim = rho.shape[0]
        if rho.shape != (dim, dim) or dim & (dim - 1):
            raise ValueError(f"density matrix shape {rho.shape} is not square with power-of-two size")
        if np.max(np.abs(rho - rho.conj().T)) > NORM_TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > NORM_TOL:
            raise ValueError(f"density matrix trace {np.trace(rho).real!r} != 1")
        if np.linalg.eigvalsh(rho)[0] < -NORM_TOL:
            raise ValueError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "entries", rho)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


class Kind(str, Enum):
    REFERENCE = "reference"
    POINTER = "pointer"

    @property
    def letter(self) -> str:
        return "R" if self is Kind.REFERENCE else "P"


@dataclass(frozen=True)
class BinaryObservable:
    """Yes/no measurement along ``axis`` on the qubit labelled ``target``.

    Outcome 0 is the +1 eigenvector of ``axis . sigma``, outcome 1 the -1
    eigenvector; for the z-axis these are |0> and |1>.
    """

    id: str
    kind: Kind
    target: str
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    _frame: np.ndarray = field(init=False, repr=False, compare=False)
    _projectors: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        axis = tuple(float(a) for a in self.axis)
        if len(axis) != 3 or abs(sqrt(sum(a * a for a in axis)) - 1) > UNITARY_TOL:
            raise ValueError(f"observable {self.id!r}: axis {self.axis} is not a unit 3-vector")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "_frame", _axis_frame(axis))
        pauli = self.pauli()
        object.__setattr__(self, "_projectors", ((IDENTITY + pauli) / 2, (IDENTITY - pauli) / 2))

    @property
    def frame(self) -> np.ndarray:
        """Unitary W with W (axis . sigma) W^dag = Z."""
        return self._frame

    def pauli(self) -> np.ndarray:
        """The +-1 valued operator axis . sigma."""
        x, y, z = self.axis
        return x * PAULI_X + y * PAULI_Y + z * PAULI_Z

    def projector(self, outcome: int) -> np.ndarray:
        """Projector onto the eigenspace of ``outcome``; P0 + P1 = I."""
        return self._projectors[outcome]

    @property
    def is_z(self) -> bool:
        return self.axis == (0.0, 0.0, 1.0)


def _axis_frame(axis) -> np.ndarray:
    x, y, z = axis
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    phi = np.arctan2(y, x)
    up = bloch_ket(theta, phi)
    down = np.array([-np.exp(-1j * phi) * sin(theta / 2), cos(theta / 2)], dtype=complex)
    # rows are the conjugated eigenvectors, so W maps them onto |0>, |1>
    return np.array([up.conj(), down.conj()])


def _apply_1q(amps: np.ndarray, n: int, pos: int, u: np.ndarray) -> np.ndarray:
    t = amps.reshape(1 << (n - 1 - pos), 2, 1 << pos)
    return np.einsum("ij,ajb->aib", u, t).reshape(-1)


@lru_cache(maxsize=256)
def _cnot_permutation(n: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(1 << n)
    return np.where((idx >> control) & 1 == 1, idx ^ (1 << target), idx)


def _apply_cnot(amps: np.ndarray, n: int, control: int, target: int) -> np.ndarray:
    return amps[_cnot_permutation(n, control, target)]


def _check_unitary(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {u.shape}")
    if np.max(np.abs(u.conj().T @ u - IDENTITY)) > UNITARY_TOL:
        raise ValueError("matrix is not unitary")
    return u


def apply_single_qubit_unitary(state: StateVector, target: int | str, u) -> StateVector:
    pos = state.position(target)
    u = _check_unitary(u)
    return StateVector._wrap(_apply_1q(state.amplitudes, state.num_qubits, pos, u), state.labels)


def apply_cnot(state: StateVector, control: int | str, target: int | str) -> StateVector:
    c, t = state.position(control), state.position(target)
    if c == t:
        raise ValueError("CNOT control and target must differ")
    return StateVector._wrap(_apply_cnot(state.amplitudes, state.num_qubits, c, t), state.labels)


def _flip(amps: np.ndarray, n: int, pos: int) -> np.ndarray:
    return amps.reshape(1 << (n - 1 - pos), 2, 1 << pos)[:, ::-1, :].reshape(-1)


def _outcome_one_probability(amps: np.ndarray, n: int, pos: int) -> float:
    t = amps.reshape(1 << (n - 1 - pos), 2, 1 << pos)
    return float(np.vdot(t[:, 1, :], t[:, 1, :]).real)


def born_probabilities(state: StateVector, obs: BinaryObservable) -> tuple[float, float]:
    pos = state.position(obs.target)
    amps = state.amplitudes
    if not obs.is_z:
        amps = _apply_1q(amps, state.num_qubits, pos, obs.frame)
    p1 = min(max(_outcome_one_probability(amps, state.num_qubits, pos), 0.0), 1.0)
    return 1.0 - p1, p1


def _collapse_z(amps: np.ndarray, n: int, pos: int, outcome: int, prob: float) -> np.ndarray:
    t = amps.reshape(1 << (n - 1 - pos), 2, 1 << pos).copy()
    t[:, 1 - outcome, :] = 0
    t /= np.sqrt(prob)
    return t.reshape(-1)


def project(state: StateVector, obs: BinaryObservable, outcome: int) -> StateVector:
    """Renormalized projection onto the eigenspace of ``outcome``."""
    pos = state.position(obs.target)
    amps = _apply_1q(state.amplitudes, state.num_qubits, pos, obs.projector(outcome))
    norm = np.linalg.norm(amps)
    if norm**2 < DEGENERATE_PROB:
        raise NumericalError(f"outcome {outcome} of {obs.id!r} has vanishing probability")
    return StateVector._wrap(amps / norm, state.labels)


def measure_z(state: StateVector, qubit: int | str, rng: np.random.Generator) -> tuple[int, StateVector]:
    """Projective computational-basis measurement of one qubit."""
    pos = state.position(qubit)
    n = state.num_qubits
    t = state.amplitudes.reshape(1 << (n - 1 - pos), 2, 1 << pos)
    p0 = float(np.vdot(t[:, 0, :], t[:, 0, :]).real)
    p1 = float(np.vdot(t[:, 1, :], t[:, 1, :]).real)
    if p0 < DEGENERATE_PROB and p1 < DEGENERATE_PROB:
        raise NumericalError("both outcome probabilities vanish")
    outcome = int(rng.random() * (p0 + p1) < p1)
    prob = p1 if outcome else p0
    if prob < DEGENERATE_PROB:
        raise NumericalError(f"sampled outcome {outcome} has vanishing probability")
    return outcome, StateVector._wrap(_collapse_z(state.amplitudes, n, pos, outcome, prob), state.labels)


def projective_measure(state: StateVector, obs: BinaryObservable, rng: np.random.Generator) -> tuple[int, StateVector]:
    if obs.is_z:
        return measure_z(state, obs.target, rng)
    p0, p1 = born_probabilities(state, obs)
    if p0 < DEGENERATE_PROB and p1 < DEGENERATE_PROB:
        raise NumericalError("both outcome probabilities vanish")
    outcome = int(rng.random() < p1)
    return outcome, project(state, obs, outcome)


def _reduced_matrix(state: StateVector, keep: Iterable[int]) -> tuple[np.ndarray, tuple[int, ...]]:
    n = state.num_qubits
    kept = tuple(sorted({state.position(q) for q in keep}))
    if not kept:
        raise ValueError("partial trace must keep at least one qubit")
    if len(kept) > MAX_KEPT_QUBITS:
        raise QubitCapError(f"cannot keep {len(kept)} qubits, reduced-state cap is {MAX_KEPT_QUBITS}")
    traced = [q for q in range(n) if q not in kept]
    # most significant kept qubit first, so reduced indices follow the same LSB convention
    axes = [n - 1 - q for q in reversed(kept)] + [n - 1 - q for q in reversed(traced)]
    mat = state.tensor().transpose(axes).reshape(1 << len(kept), -1)
    return mat @ mat.conj().T, kept


def partial_trace(state: StateVector, keep: Iterable[int | str]) -> DensityMatrix:
    """Reduced state on ``keep``; the lowest kept position becomes bit 0."""
    rho, kept = _reduced_matrix(state, keep)
    return DensityMatrix(rho, kept)


def purity(rho: DensityMatrix | np.ndarray) -> float:
    m = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho)
    # tr(rho^2) for Hermitian rho is the squared Frobenius norm
    return float(np.sum(np.abs(m) ** 2))


def single_qubit_coherence(state: StateVector, qubit: int | str) -> float:
    """|rho_01| of one qubit's reduced state."""
    pos = state.position(qubit)
    t = state.amplitudes.reshape(1 << (state.num_qubits - 1 - pos), 2, 1 << pos)
    return float(abs(np.vdot(t[:, 1, :], t[:, 0, :])))


def partial_transpose(rho: np.ndarray, transposed: Iterable[int], num_qubits: int) -> np.ndarray:
    """Transpose the listed local qubits (LSB-first indices) of a ``num_qubits`` matrix."""
    t = rho.reshape((2,) * (2 * num_qubits))
    axes = list(range(2 * num_qubits))
    for q in transposed:
        row, col = num_qubits - 1 - q, 2 * num_qubits - 1 - q
        axes[row], axes[col] = axes[col], axes[row]
    return t.transpose(axes).reshape(rho.shape)


def negativity(state: StateVector, partition: tuple[Iterable[int | str], Iterable[int | str]]) -> float:
    """Sum of |negative eigenvalues| of the partial transpose across A|B.

    Qubits outside A and B are traced out first.
    """
    a = {state.position(q) for q in partition[0]}
    b = {state.position(q) for q in partition[1]}
    if not a or not b:
        raise ValueError("both sides of the partition must be nonempty")
    if a & b:
        raise ValueError(f"partition sides overlap on qubits {sorted(a & b)}")
    rho, kept = _reduced_matrix(state, a | b)
    local_b = [kept.index(q) for q in b]
    eig = np.linalg.eigvalsh(partial_transpose(rho, local_b, len(kept)))
    return float(np.abs(eig[eig < 0]).sum())


def extend_with_fresh_qubit(state: StateVector, role: str) -> StateVector:
    """Append a |0> qubit labelled ``role`` as the new most significant bit."""
    if role in state.labels:
        raise ValueError(f"role {role!r} already allocated")
    n = state.num_qubits
    if n + 1 > MAX_QUBITS:
        raise QubitCapError(f"allocating {role!r} needs {n + 1} qubits, cap is {MAX_QUBITS}")
    amps = np.concatenate([state.amplitudes, np.zeros_like(state.amplitudes)])
    return StateVector(amps, {**state.labels, role: n}, check=False)


def release_qubit(state: StateVector, qubit: int | str, tol: float = 1e-12) -> StateVector:
    """Remove a qubit that is in |0> as a product factor.

    Positions above the released qubit shift down by one.
    """
    pos = state.position(qubit)
    n = state.num_qubits
    if n == 1:
        raise ValueError("cannot release the last qubit")
    t = state.amplitudes.reshape(1 << (n - 1 - pos), 2, 1 << pos)
    if np.vdot(t[:, 1, :], t[:, 1, :]).real > tol:
        raise ValueError(f"qubit {state.role(pos)!r} is not in |0>")
    labels = {r: (p - 1 if p > pos else p) for r, p in state.labels.items() if p != pos}
    amps = t[:, 0, :].reshape(-1)
    return StateVector(amps / np.linalg.norm(amps), labels, check=False)


def fidelity(a: StateVector, b: StateVector) -> float:
    """|<a|b>|^2 after aligning b's qubit order to a's labels."""
    if set(a.labels) != set(b.labels):
        raise ValueError("states carry different role sets")
    n = a.num_qubits
    order = [n - 1 - b.labels[a.role(n - 1 - ax)] for ax in range(n)]
    bt = b.tensor().transpose(order).reshape(-1)
    return float(abs(np.vdot(a.amplitudes, bt)) ** 2)
