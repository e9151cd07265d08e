"""Observer bookkeeping: observable catalog, stochastic schedule, classical
memory tape, system identification, commutation checks and the dissipation
ledger.

Each observable ``k`` has its own observer qubit (role ``observer_<id>`` in
the register model); the single-observer toy setups pass one shared role.
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from enum import Enum
from math import log
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    BinaryObservable,
    IDENTITY,
    Kind,
    MAX_KEPT_QUBITS,
    StateVector,
    _apply_1q,
    _apply_cnot,
    _flip,
    extend_with_fresh_qubit,
    measure_z,
)

BOLTZMANN = 1.380649e-23  # J/K, exact SI value
LN2 = log(2)
SCHEDULE_TOL = 1e-12
SIEVE_TOL = 1e-10

class Mode(str, Enum):
    UNITARY = "unitary"
    RECORDED = "recorded"


class Identification(str, Enum):
    IDENTIFIED = "identified"
    NOT_IDENTIFIED = "not_identified"
    INCOMPLETE = "incomplete"


@dataclass
class ObservableCatalog:
    entries: list[BinaryObservable]

    def __post_init__(self):
        ids = [o.id for o in self.entries]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ValueError(f"duplicate observable ids: {dupes}")
        self._by_id = {o.id: o for o in self.entries}

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, observable_id: str) -> BinaryObservable:
        try:
            return self._by_id[observable_id]
        except KeyError:
            raise LookupError(f"observable {observable_id!r} not in catalog") from None

    def __contains__(self, observable_id: str) -> bool:
        return observable_id in self._by_id

    @property
    def reference_count(self) -> int:
        return sum(o.kind is Kind.REFERENCE for o in self.entries)

    @property
    def pointer_count(self) -> int:
        return sum(o.kind is Kind.POINTER for o in self.entries)

    def references(self) -> list[BinaryObservable]:
        return [o for o in self.entries if o.kind is Kind.REFERENCE]

    def pointers(self) -> list[BinaryObservable]:
        return [o for o in self.entries if o.kind is Kind.POINTER]


@dataclass
class ReferenceSpec:
    """Expected outcome bit per reference observable id."""

    expected: dict[str, int]

    def validate(self, catalog: ObservableCatalog) -> None:
        for key, bit in self.expected.items():
            if catalog[key].kind is not Kind.REFERENCE:
                raise ValueError(f"reference spec key {key!r} is not a reference observable")
            if bit not in (0, 1):
                raise ValueError(f"reference spec value for {key!r} must be 0 or 1, got {bit!r}")


@dataclass
class Schedule:
    """Per-tick selection probabilities over the catalog entries."""

    rows: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    def __len__(self) -> int:
        return self.rows.shape[0]

    @property
    def width(self) -> int:
        return self.rows.shape[1]

    def validate(self) -> None:
        for t, row in enumerate(self.rows):
            _check_row(row, t)

    @classmethod
    def uniform(cls, n_observables: int, ticks: int, dt: float = 1.0) -> Schedule:
        return cls(np.full((ticks, n_observables), 1.0 / n_observables), dt)

    @classmethod
    def round_robin(cls, n_observables: int, ticks: int, dt: float = 1.0) -> Schedule:
        rows = np.zeros((ticks, n_observables))
        rows[np.arange(ticks), np.arange(ticks) % n_observables] = 1.0
        return cls(rows, dt)

    @classmethod
    def cycle(cls, order: Sequence[int], n_observables: int, cycles: int, dt: float = 1.0) -> Schedule:
        """One-hot rows repeating ``order`` (indices into the catalog)."""
        seq = list(order) * cycles
        rows = np.zeros((len(seq), n_observables))
        rows[np.arange(len(seq)), seq] = 1.0
        return cls(rows, dt)


def _check_row(row: np.ndarray, t: int) -> None:
    if np.any(row < 0):
        raise ValueError(f"schedule row {t} has negative entries")
    if abs(row.sum() - 1) > SCHEDULE_TOL:
        raise ValueError(f"schedule row {t} sums to {row.sum()!r}, not 1")


def next_observable(schedule: Schedule, t: int, rng: np.random.Generator) -> int:
    """Index of the observable deployed at tick ``t``."""
    if not 0 <= t < len(schedule):
        raise IndexError(f"tick {t} outside schedule of length {len(schedule)}")
    row = schedule.rows[t]
    _check_row(row, t)
    u = rng.random()
    k = int(np.searchsorted(np.cumsum(row), u, side="right"))
    if k >= len(row):
        # cumsum rounded below u; fall back to the last supported entry
        k = int(np.flatnonzero(row)[-1])
    return k


@dataclass(frozen=True)
class MemoryRecord:
    t: int
    observable_id: str
    outcome: int
    kind: Kind


CSV_COLUMNS = ("t", "observable_id", "kind", "outcome")


class MemoryTape:
    """Append-only, time-ordered outcome memory."""

    def __init__(self, records: Iterable[MemoryRecord] = ()):
        self.records: list[MemoryRecord] = []
        for r in records:
            self.append(r)

    def append(self, record: MemoryRecord) -> None:
        if self.records and record.t < self.records[-1].t:
            raise ValueError(f"record at t={record.t} precedes last record at t={self.records[-1].t}")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow([r.t, r.observable_id, r.kind.value, r.outcome])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> MemoryTape:
        rows = csv.DictReader(io.StringIO(text))
        if tuple(rows.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"memory CSV header must be {','.join(CSV_COLUMNS)}")
        return cls(
            MemoryRecord(int(r["t"]), r["observable_id"], int(r["outcome"]), Kind(r["kind"])) for r in rows
        )


@dataclass
class DissipationLedger:
    """Accumulates ``c * k_B * T`` per recorded observation.

    ``units="natural"`` sets k_B = T = 1 so the total is ``count * c``.
    """

    c: float = LN2
    temperature: float = 300.0
    units: str = "physical"
    dt: float = 1.0
    observation_count: int = 0

    def __post_init__(self):
        # allow a rounding-level slack below ln 2 for values typed as 0.6931471805599453
        if self.c < LN2 * (1 - 1e-15):
            raise ValueError(f"efficiency factor c must be >= ln 2, got {self.c!r}")
        if self.units not in ("physical", "natural"):
            raise ValueError(f"units must be 'physical' or 'natural', got {self.units!r}")
        if self.units == "natural":
            self.temperature = 1.0
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    @property
    def k_b(self) -> float:
        return BOLTZMANN if self.units == "physical" else 1.0

    @property
    def energy_per_observation(self) -> float:
        return self.c * self.k_b * self.temperature

    @property
    def total_energy(self) -> float:
        return self.observation_count * self.c * self.k_b * self.temperature

    @property
    def total_action(self) -> float:
        """Energy times the observation window, the time-integrated form."""
        return self.total_energy * self.dt

    def record(self, count: int = 1) -> None:
        self.observation_count += count

    def summary(self) -> dict:
        return {
            "c": self.c,
            "temperature": self.temperature,
            "k_b": self.k_b,
            "units": self.units,
            "dt": self.dt,
            "observation_count": self.observation_count,
            "energy_per_observation": self.energy_per_observation,
            "total_energy": self.total_energy,
            "total_action": self.total_action,
        }


def premeasure(state: StateVector, obs: BinaryObservable, observer: int | str) -> StateVector:
    """Rotate the target into the observable's frame, CNOT onto the observer, rotate back."""
    n = state.num_qubits
    tgt, obq = state.position(obs.target), state.position(observer)
    if tgt == obq:
        raise ValueError("observer qubit cannot be the measured qubit")
    amps = state.amplitudes
    rotated = not obs.is_z
    if rotated:
        amps = _apply_1q(amps, n, tgt, obs.frame)
    amps = _apply_cnot(amps, n, tgt, obq)
    if rotated:
        amps = _apply_1q(amps, n, tgt, obs.frame.conj().T)
    return StateVector._wrap(amps, state.labels)


def perform_measurement(
    state: StateVector,
    obs: BinaryObservable,
    observer: int | str,
    mode: Mode | str,
    memory: MemoryTape | None,
    ledger: DissipationLedger | None,
    rng: np.random.Generator,
    t: int = 0,
) -> tuple[StateVector, MemoryRecord | None]:
    """Premeasure ``obs`` onto ``observer``; in recorded mode also collapse,
    log the bit, charge the ledger and reset the observer qubit to |0>."""
    mode = Mode(mode)
    obq = state.position(observer)
    state = premeasure(state, obs, obq)
    if mode is Mode.UNITARY:
        return state, None
    outcome, state = measure_z(state, obq, rng)
    if outcome:
        state = StateVector._wrap(_flip(state.amplitudes, state.num_qubits, obq), state.labels)
    record = MemoryRecord(t, obs.id, outcome, obs.kind)
    if memory is not None:
        memory.append(record)
    if ledger is not None:
        ledger.record()
    return state, record


def identify_system(
    memory: Iterable[MemoryRecord],
    spec: ReferenceSpec,
    window: tuple[int, int] | None = None,
) -> Identification:
    """Latest record per reference id inside ``window`` (inclusive) decides."""
    latest: dict[str, int] = {}
    for r in memory:
        if window is not None and not window[0] <= r.t <= window[1]:
            continue
        if r.observable_id in spec.expected:
            latest[r.observable_id] = r.outcome
    if any(k not in latest for k in spec.expected):
        return Identification.INCOMPLETE
    if any(latest[k] != v for k, v in spec.expected.items()):
        return Identification.NOT_IDENTIFIED
    return Identification.IDENTIFIED


@dataclass(frozen=True)
class SieveViolation:
    first: str
    second: str
    commutator_norm: float


@dataclass
class SieveReport:
    checked: list[SieveViolation] = field(default_factory=list)

    @property
    def violations(self) -> list[SieveViolation]:
        return [v for v in self.checked if v.commutator_norm > SIEVE_TOL]

    @property
    def ok(self) -> bool:
        return not self.violations


def _embedded_pauli(obs: BinaryObservable, support: list[str]) -> np.ndarray:
    """axis . sigma on ``support`` (first entry is the least significant qubit)."""
    op = np.ones((1, 1), dtype=complex)
    for role in support:
        op = np.kron(obs.pauli() if role == obs.target else IDENTITY, op)
    return op


def commutator_norm(a: BinaryObservable, b: BinaryObservable) -> float:
    """Frobenius norm of [A, B] for the +-1 operators on their joint support."""
    support = sorted({a.target, b.target})
    if len(support) > MAX_KEPT_QUBITS:
        raise ValueError("joint support too large")
    ma, mb = _embedded_pauli(a, support), _embedded_pauli(b, support)
    return float(np.linalg.norm(ma @ mb - mb @ ma))


def verify_predictability_sieve(catalog: ObservableCatalog) -> SieveReport:
    """Check reference/reference and reference/pointer commutators.

    Pointer/pointer pairs are exempt.
    """
    report = SieveReport()
    for a, b in itertools.combinations(catalog.entries, 2):
        if a.kind is Kind.POINTER and b.kind is Kind.POINTER:
            continue
        report.checked.append(SieveViolation(a.id, b.id, commutator_norm(a, b)))
    return report


def classify_coarse_grained(memory: Iterable[MemoryRecord]) -> list[str]:
    return [r.kind.letter for r in memory]


@dataclass
class Observer:
    """Register-model observer: one observer qubit per catalog entry."""

    catalog: ObservableCatalog
    schedule: Schedule
    ledger: DissipationLedger = field(default_factory=DissipationLedger)
    memory: MemoryTape = field(default_factory=MemoryTape)

    def __post_init__(self):
        if self.schedule.width != len(self.catalog):
            raise ValueError(
                f"schedule has {self.schedule.width} columns but catalog has {len(self.catalog)} observables"
            )

    @staticmethod
    def qubit_role(obs: BinaryObservable) -> str:
        return f"observer_{obs.id}"

    def allocate(self, state: StateVector) -> StateVector:
        """Add any missing observer qubits in |0>."""
        for obs in self.catalog.entries:
            role = self.qubit_role(obs)
            if role not in state.labels:
                state = extend_with_fresh_qubit(state, role)
        return state

    def step(self, state: StateVector, t: int, rng: np.random.Generator, mode: Mode | str = Mode.RECORDED):
        k = next_observable(self.schedule, t, rng)
        obs = self.catalog.entries[k]
        return perform_measurement(state, obs, self.qubit_role(obs), mode, self.memory, self.ledger, rng, t)

    def run(self, state: StateVector, rng: np.random.Generator, mode: Mode | str = Mode.RECORDED) -> StateVector:
        for t in range(len(self.schedule)):
            state, _ = self.step(state, t, rng, mode)
        return state
