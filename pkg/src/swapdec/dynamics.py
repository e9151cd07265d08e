"""Measurement sequences built on the state-vector engine.

* swap traces: one observer qubit alternately entangled with a reference
  and a pointer qubit,
* environment coupling and the decay Monte Carlo over measurement cycles,
* Zeno runs (repeated pointer measurements),
* two-time Leggett-Garg trajectory batches.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from math import pi

import numpy as np

from .core import (
    MAX_QUBITS,
    BinaryObservable,
    Kind,
    QubitCapError,
    StateVector,
    _apply_1q,
    _outcome_one_probability,
    apply_cnot,
    bloch_ket,
    extend_with_fresh_qubit,
    negativity,
    release_qubit,
    rx,
    single_qubit_coherence,
)
from .observer import (
    DissipationLedger,
    Identification,
    MemoryTape,
    Mode,
    ReferenceSpec,
    identify_system,
    perform_measurement,
)

log = logging.getLogger(__name__)

ENTANGLED_TOL = 1e-6
SEPARABLE_TOL = 1e-9


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream for one trial, derived from (seed, trial index)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


@dataclass
class Decomposition:
    """Split of the non-observer qubits into R, P and their environments.

    ``pointer_qubits[0]`` is the tracked pointer qubit; coupled environment
    qubits are appended behind it.
    """

    reference_qubits: list[str]
    pointer_qubits: list[str]
    environment_R: set[str]
    environment_P: set[str]
    couplings: int = 0

    @property
    def pointer(self) -> str:
        return self.pointer_qubits[0]

    @property
    def world(self) -> set[str]:
        return set(self.environment_R) | set(self.reference_qubits)

    def validate(self, state: StateVector | None = None, observers: set[str] = frozenset()) -> None:
        r, p = set(self.reference_qubits), set(self.pointer_qubits)
        if r & p:
            raise ValueError(f"reference and pointer qubits overlap: {sorted(r & p)}")
        if not r <= self.environment_P:
            raise ValueError("environment of P must contain R")
        if self.environment_R | r != self.environment_P | p:
            raise ValueError("E_R + R and E_P + P must cover the same qubits")
        if state is not None and self.world != set(state.labels) - set(observers):
            raise ValueError("decomposition does not cover the non-observer register")

    @classmethod
    def build(cls, reference: list[str], pointer: list[str], other: list[str]) -> Decomposition:
        r, p, o = set(reference), set(pointer), set(other)
        return cls(list(reference), list(pointer), p | o, r | o)


# ---------------------------------------------------------------- swap trace


@dataclass(frozen=True)
class SwapStep:
    step: int
    label: str
    negativity_or: float
    negativity_op: float

    @property
    def separable_or(self) -> bool:
        return self.negativity_or <= SEPARABLE_TOL

    @property
    def separable_op(self) -> bool:
        return self.negativity_op <= SEPARABLE_TOL


@dataclass
class SwapTrace:
    steps: list[SwapStep]
    states: list[StateVector] = field(repr=False)

    def alternates(self) -> bool:
        """Exactly one of the O:R, O:P cuts is entangled after every step."""
        for s in self.steps:
            hi = (s.negativity_or > ENTANGLED_TOL, s.negativity_op > ENTANGLED_TOL)
            lo = (s.negativity_or <= SEPARABLE_TOL, s.negativity_op <= SEPARABLE_TOL)
            expected = (True, False) if s.label == "R" else (False, True)
            if hi != expected or lo != tuple(not e for e in expected):
                return False
        return True


@dataclass
class ToySetup:
    """One qubit each for O, R, P, E_R, E_P.

    With ``uncompute`` the single observer qubit is disentangled from its
    previous partner before entangling the next one. Without it each
    observable gets its own observer qubit (``observer_R``, ``observer_P``)
    and the O cut covers both.
    """

    reference_state: tuple[float, float] = (pi / 2, 0.0)
    pointer_state: tuple[float, float] = (pi / 2, 0.0)
    uncompute: bool = True

    def observers(self) -> list[str]:
        return ["observer"] if self.uncompute else ["observer_R", "observer_P"]

    def prepare(self) -> StateVector:
        zero = bloch_ket(0.0)
        kets = {o: zero for o in self.observers()}
        kets.update(
            reference=bloch_ket(*self.reference_state),
            pointer=bloch_ket(*self.pointer_state),
            env_R=zero,
            env_P=zero,
        )
        return StateVector.product(kets)

    def decomposition(self) -> Decomposition:
        return Decomposition.build(["reference"], ["pointer"], ["env_R", "env_P"])


TOY_OBSERVABLES = {
    "R": BinaryObservable("M_R", Kind.REFERENCE, "reference"),
    "P": BinaryObservable("M_P", Kind.POINTER, "pointer"),
}


def run_swap_sequence(sequence, setup: ToySetup | None = None) -> SwapTrace:
    """Apply unitary premeasurements for a sequence of 'R'/'P' labels."""
    setup = setup or ToySetup()
    sequence = [str(s).upper() for s in sequence]
    if not sequence:
        raise ValueError("swap sequence must not be empty")
    bad = sorted({s for s in sequence if s not in TOY_OBSERVABLES})
    if bad:
        raise ValueError(f"swap sequence labels must be R or P, got {bad}")

    state = setup.prepare()
    setup.decomposition().validate(state, set(setup.observers()))
    observers = setup.observers()
    rng = np.random.default_rng(0)  # unused by unitary premeasurement
    partner = None
    steps, states = [], []
    for i, label in enumerate(sequence):
        obs = TOY_OBSERVABLES[label]
        if setup.uncompute:
            if partner != label:
                if partner is not None:
                    # premeasurement is an involution, so repeating it un-computes
                    state, _ = perform_measurement(state, TOY_OBSERVABLES[partner], "observer", Mode.UNITARY, None, None, rng)
                state, _ = perform_measurement(state, obs, "observer", Mode.UNITARY, None, None, rng)
        else:
            state, _ = perform_measurement(state, obs, f"observer_{label}", Mode.UNITARY, None, None, rng)
        partner = label
        steps.append(
            SwapStep(
                i + 1,
                label,
                negativity(state, (observers, ["reference"])),
                negativity(state, (observers, ["pointer"])),
            )
        )
        states.append(state)
    return SwapTrace(steps, states)


# ------------------------------------------------------- environment coupling


def couple_environment(
    state: StateVector,
    decomposition: Decomposition,
    rng: np.random.Generator,
    p_int: float,
    *,
    compress: bool = False,
) -> tuple[StateVector, bool]:
    """With probability ``p_int`` copy the tracked pointer qubit onto a fresh
    environment qubit xi (CNOT onto |0>) and add xi to the pointer component.

    ``compress`` un-computes a redundant new xi against the previous one
    (a CNOT acting only on environment qubits) and releases it, so repeated
    couplings cost one register qubit instead of one per event. Since the
    extra CNOT touches only environment qubits, the reduced state of any set
    of non-environment qubits (observer, reference, pointer) is unchanged.
    """
    if not 0.0 <= p_int <= 1.0:
        raise ValueError(f"p_int must lie in [0, 1], got {p_int!r}")
    if rng.random() >= p_int:
        return state, False
    if state.num_qubits >= MAX_QUBITS:
        raise QubitCapError(
            f"coupling needs qubit {state.num_qubits + 1} but the cap is {MAX_QUBITS}; "
            "lower m*(n-1) or use the compressed environment"
        )
    decomposition.couplings += 1
    xi = f"xi{decomposition.couplings}"
    previous = decomposition.pointer_qubits[-1] if len(decomposition.pointer_qubits) > 1 else None
    state = extend_with_fresh_qubit(state, xi)
    state = apply_cnot(state, decomposition.pointer, xi)
    if compress and previous is not None:
        state = apply_cnot(state, previous, xi)
        n, pos = state.num_qubits, state.labels[xi]
        if _outcome_one_probability(state.amplitudes, n, pos) <= 1e-12:
            return release_qubit(state, xi), True
    decomposition.pointer_qubits.append(xi)
    decomposition.environment_R.add(xi)
    return state, True


# ------------------------------------------------------------- decay runs


@dataclass
class RunConfig:
    n: int
    m: int
    p_int: float
    trials: int = 1000
    seed: int = 0
    mode: Mode = Mode.UNITARY
    pointer_state: tuple[float, float] = (pi / 2, 0.0)
    reference_qubits: int = 1
    reference_bit: int = 1
    environment: str = "retain"
    c: float = np.log(2)
    temperature: float = 300.0
    units: str = "physical"

    def __post_init__(self):
        self.mode = Mode(self.mode)
        if self.n < 1:
            raise ValueError("n must be ≥ 1")
        if self.m < 1:
            raise ValueError("m must be ≥ 1")
        if self.trials < 1:
            raise ValueError("trials must be ≥ 1")
        if not 0.0 <= self.p_int <= 1.0:
            raise ValueError("p_int must lie in [0, 1]")
        if self.reference_qubits < 1:
            raise ValueError("reference_qubits must be ≥ 1")
        if self.reference_bit not in (0, 1):
            raise ValueError("reference_bit must be 0 or 1")
        if self.environment not in ("retain", "compress"):
            raise ValueError("environment must be 'retain' or 'compress'")

    @property
    def intervals(self) -> int:
        """Coupling opportunities per trial."""
        return self.m * (self.n - 1)

    def qubits_required(self) -> int:
        overhead = 1 + self.reference_qubits + 1
        env = self.intervals if self.environment == "retain" else min(2, self.intervals)
        return overhead + env

    def check_budget(self) -> None:
        need = self.qubits_required()
        if need > MAX_QUBITS:
            raise QubitCapError(
                f"decay run requires {need} qubits (1 observer + {self.reference_qubits} reference "
                f"+ 1 pointer + {need - 2 - self.reference_qubits} environment) but only {MAX_QUBITS} "
                "are available; lower m*(n-1) or set environment to 'compress'"
            )


@dataclass(frozen=True)
class DecayCycle:
    cycle: int
    fraction_pure: float
    mean_coherence: float
    analytic_pure: float
    mean_pointer_purity: float


@dataclass
class DecayResult:
    config: RunConfig
    cycles: list[DecayCycle]
    first_coupling: np.ndarray = field(repr=False)
    coherence: np.ndarray = field(repr=False)
    recorded_observations: int = 0
    identified_fraction: float = 1.0

    @property
    def fraction_pure(self) -> np.ndarray:
        return np.array([c.fraction_pure for c in self.cycles])

    @property
    def mean_coherence(self) -> np.ndarray:
        return np.array([c.mean_coherence for c in self.cycles])

    @property
    def analytic_pure(self) -> np.ndarray:
        return np.array([c.analytic_pure for c in self.cycles])


def analytic_prob_pure(p_int: float, m: int, n: int) -> float:
    """(1 - p_int) ** (m (n - 1))."""
    if not 0.0 <= p_int <= 1.0:
        raise ValueError("p_int must lie in [0, 1]")
    if m < 0 or n < 1:
        raise ValueError("need m ≥ 0 and n ≥ 1")
    return (1.0 - p_int) ** (m * (n - 1))


@dataclass
class _DecaySetup:
    initial: StateVector
    references: list[str]
    reference_observables: list[BinaryObservable]
    pointer_observable: BinaryObservable
    spec: ReferenceSpec

    @classmethod
    def build(cls, config: RunConfig) -> _DecaySetup:
        refs = [f"reference_{i}" for i in range(config.reference_qubits)]
        ref_ket = bloch_ket(pi * config.reference_bit)
        kets = {"observer": bloch_ket(0.0), **{r: ref_ket for r in refs}, "pointer": bloch_ket(*config.pointer_state)}
        ref_obs = [BinaryObservable(f"M_R{i}", Kind.REFERENCE, r) for i, r in enumerate(refs)]
        used = ref_obs[: min(len(ref_obs), config.n - 1)]
        return cls(
            StateVector.product(kets),
            refs,
            ref_obs,
            BinaryObservable("M_P", Kind.POINTER, "pointer"),
            ReferenceSpec({o.id: config.reference_bit for o in used}),
        )


def _decay_trial(config: RunConfig, setup: _DecaySetup, rng: np.random.Generator):
    state = setup.initial
    decomp = Decomposition.build(setup.references, ["pointer"], [])
    ref_obs = setup.reference_observables
    memory = MemoryTape()
    compress = config.environment == "compress"

    first = 0  # 1-based interval of the first coupling, 0 if none
    interval = 0
    t = 0
    coherence = np.empty(config.m)
    pointer_purity = np.empty(config.m)
    for c in range(config.m):
        for i in range(config.n - 1):
            state, _ = perform_measurement(state, ref_obs[i % len(ref_obs)], "observer", Mode.RECORDED, memory, None, rng, t)
            interval += 1
            state, fired = couple_environment(state, decomp, rng, config.p_int, compress=compress)
            if fired and not first:
                first = interval
            t += 1
        coh = single_qubit_coherence(state, "pointer")
        p1 = _outcome_one_probability(state.amplitudes, state.num_qubits, state.labels["pointer"])
        coherence[c] = coh
        pointer_purity[c] = p1 * p1 + (1 - p1) ** 2 + 2 * coh * coh
        if config.mode is Mode.RECORDED:
            state, _ = perform_measurement(state, setup.pointer_observable, "observer", Mode.RECORDED, memory, None, rng, t)
        t += 1
    identified = identify_system(memory, setup.spec) is Identification.IDENTIFIED
    return first, coherence, pointer_purity, len(memory), identified


def _decay_chunk(config: RunConfig, start: int, stop: int):
    setup = _DecaySetup.build(config)
    out = [_decay_trial(config, setup, trial_rng(config.seed, k)) for k in range(start, stop)]
    first = np.array([o[0] for o in out], dtype=np.int64)
    coh = np.array([o[1] for o in out]).reshape(len(out), config.m)
    pur = np.array([o[2] for o in out]).reshape(len(out), config.m)
    records = sum(o[3] for o in out)
    identified = sum(o[4] for o in out)
    return first, coh, pur, records, identified


def _chunks(total: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, total))
    edges = np.linspace(0, total, parts + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def run_decoherence_experiment(config: RunConfig, threads: int = 1) -> DecayResult:
    """Monte Carlo over trials of m cycles of (n-1) reference intervals plus
    one pointer interval.

    Each reference interval records a reference outcome and offers one
    coupling opportunity; the pointer coherence is read at the pointer
    interval (and the pointer is collapsed there in recorded mode).
    Results depend only on the config, never on ``threads``.
    """
    config.check_budget()
    if threads > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_decay_chunk, config, a, b) for a, b in _chunks(config.trials, threads)]
            parts = [f.result() for f in futures]
    else:
        parts = [_decay_chunk(config, 0, config.trials)]
    first = np.concatenate([p[0] for p in parts])
    coh = np.concatenate([p[1] for p in parts])
    pur = np.concatenate([p[2] for p in parts])
    records = sum(p[3] for p in parts)
    identified = sum(p[4] for p in parts)

    cycles = []
    for c in range(1, config.m + 1):
        horizon = c * (config.n - 1)
        still_pure = (first == 0) | (first > horizon)
        cycles.append(
            DecayCycle(
                cycle=c,
                fraction_pure=float(np.count_nonzero(still_pure)) / config.trials,
                mean_coherence=float(coh[:, c - 1].mean()),
                analytic_pure=analytic_prob_pure(config.p_int, c, config.n),
                mean_pointer_purity=float(pur[:, c - 1].mean()),
            )
        )
    return DecayResult(
        config=config,
        cycles=cycles,
        first_coupling=first,
        coherence=coh,
        recorded_observations=records,
        identified_fraction=identified / config.trials,
    )


def decay_ledger(result: DecayResult) -> DissipationLedger:
    cfg = result.config
    ledger = DissipationLedger(cfg.c, cfg.temperature, cfg.units)
    ledger.record(result.recorded_observations)
    return ledger


# ------------------------------------------------------------------- Zeno


_ZENO_POINTER = BinaryObservable("M_P", Kind.POINTER, "pointer")


def run_zeno(
    m: int,
    rng: np.random.Generator,
    pointer_state: tuple[float, float] = (pi / 2, 0.0),
    epsilon: float = 0.0,
    memory: MemoryTape | None = None,
    ledger: DissipationLedger | None = None,
) -> list[int]:
    """m recorded pointer measurements, each preceded by an x-rotation of
    ``epsilon`` (no free evolution when epsilon is 0)."""
    if m < 1:
        raise ValueError("m must be ≥ 1")
    state = StateVector.product({"pointer": bloch_ket(*pointer_state), "observer": bloch_ket(0.0)})
    step = rx(epsilon) if epsilon else None
    outcomes = []
    for t in range(m):
        if step is not None:
            state = StateVector._wrap(_apply_1q(state.amplitudes, 2, 0, step), state.labels)
        state, rec = perform_measurement(state, _ZENO_POINTER, "observer", Mode.RECORDED, memory, ledger, rng, t)
        outcomes.append(rec.outcome)
    return outcomes


@dataclass
class ZenoConfig:
    m: int
    trials: int = 1
    seed: int = 0
    epsilon: float = 0.0
    pointer_state: tuple[float, float] = (pi / 2, 0.0)
    c: float = np.log(2)
    temperature: float = 300.0
    units: str = "physical"

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be ≥ 1")
        if self.trials < 1:
            raise ValueError("trials must be ≥ 1")


@dataclass
class ZenoResult:
    config: ZenoConfig
    outcomes: np.ndarray = field(repr=False)  # (trials, m)
    prepared_outcome: int | None
    ledger: DissipationLedger

    @property
    def constant_after_first(self) -> np.ndarray:
        return np.all(self.outcomes == self.outcomes[:, :1], axis=1)

    @property
    def survived(self) -> np.ndarray:
        """Trials whose outcomes all equal the prepared eigenstate's outcome
        (or the first outcome when the preparation is not an eigenstate)."""
        ref = self.outcomes[:, :1] if self.prepared_outcome is None else self.prepared_outcome
        return np.all(self.outcomes == ref, axis=1)

    @property
    def survival(self) -> float:
        return float(self.survived.mean())


def zeno_experiment(config: ZenoConfig) -> ZenoResult:
    ledger = DissipationLedger(config.c, config.temperature, config.units)
    rows = [
        run_zeno(config.m, trial_rng(config.seed, k), config.pointer_state, config.epsilon, ledger=ledger)
        for k in range(config.trials)
    ]
    p1 = abs(bloch_ket(*config.pointer_state)[1]) ** 2
    prepared = 0 if p1 < 1e-12 else 1 if p1 > 1 - 1e-12 else None
    return ZenoResult(config, np.array(rows, dtype=np.int8), prepared, ledger)


# ------------------------------------------------------------ Leggett-Garg

LG_PAIRS = ((2, 1), (3, 2), (3, 1))


@dataclass
class LGTrajectories:
    theta: float
    protocol: str
    pairs: dict[tuple[int, int], np.ndarray]  # (later, earlier) -> (trials, 2) outcomes (q_i, q_j)

    @property
    def trials_per_pair(self) -> int:
        return len(self.pairs[LG_PAIRS[0]])


def _lg_trial(theta: float, measure_at: tuple[int, ...], rng: np.random.Generator) -> dict[int, int]:
    state = StateVector.product({"pointer": bloch_ket(0.0), "observer": bloch_ket(0.0)})
    step = rx(theta)
    out = {}
    for k in (1, 2, 3):
        if k > 1:
            state = StateVector._wrap(_apply_1q(state.amplitudes, 2, 0, step), state.labels)
        if k in measure_at:
            state, rec = perform_measurement(state, _ZENO_POINTER, "observer", Mode.RECORDED, None, None, rng, k)
            out[k] = rec.outcome
    return out


def generate_lg_trajectories(
    omega: float,
    tau: float,
    trials: int,
    rng: np.random.Generator,
    protocol: str = "pairwise",
) -> LGTrajectories:
    """Outcomes at t1, t2 = t1 + tau, t3 = t1 + 2 tau for a pointer qubit
    starting in |0> and rotating about x by omega * tau per interval.

    ``pairwise`` runs one batch per correlator, measuring only at its two
    times. ``sequential`` measures at all three times in every trajectory,
    which is the decohered control.
    """
    if trials < 1:
        raise ValueError("trials must be ≥ 1")
    theta = omega * tau
    pairs = {}
    if protocol == "pairwise":
        for i, j in LG_PAIRS:
            rows = [_lg_trial(theta, (j, i), rng) for _ in range(trials)]
            pairs[(i, j)] = np.array([[r[i], r[j]] for r in rows], dtype=np.int8)
    elif protocol == "sequential":
        rows = [_lg_trial(theta, (1, 2, 3), rng) for _ in range(trials)]
        for i, j in LG_PAIRS:
            pairs[(i, j)] = np.array([[r[i], r[j]] for r in rows], dtype=np.int8)
    else:
        raise ValueError(f"unknown LG protocol {protocol!r}")
    return LGTrajectories(theta, protocol, pairs)
