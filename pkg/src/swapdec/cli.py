"""Command-line entry point.

    swapdec decay --config decay.json --seed 42 --out results/

Exit codes: 0 success, 1 validation error, 2 resource (qubit cap) error,
3 insufficient data for a fit.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import InsufficientDataError, fit_decay, lg_from_trajectories, lg_quantum_k
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, load_config, scenario_path
from .core import BinaryObservable, QubitCapError, StateVector, bloch_ket, fidelity
from .dynamics import (
    RunConfig,
    ToySetup,
    ZenoConfig,
    decay_ledger,
    generate_lg_trajectories,
    run_decoherence_experiment,
    run_swap_sequence,
    zeno_experiment,
)
from .observer import (
    DissipationLedger,
    ObservableCatalog,
    Observer,
    ReferenceSpec,
    Schedule,
    classify_coarse_grained,
    identify_system,
    verify_predictability_sieve,
)

log = logging.getLogger("swapdec")

EXIT_OK, EXIT_VALIDATION, EXIT_RESOURCE, EXIT_INSUFFICIENT = 0, 1, 2, 3

DECAY_COLUMNS = ("cycle", "fraction_pure", "mean_coherence", "analytic_pure")
SWAP_COLUMNS = ("step", "label", "negativity_or", "negativity_op", "separable_or", "separable_op")
LG_COLUMNS = ("theta", "c21", "c32", "c31", "k_value", "k_stderr")
ZENO_COLUMNS = ("trial", "first_outcome", "constant_after_first", "survived")
SIEVE_COLUMNS = ("first", "second", "commutator_norm", "violation")


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def serialize_results(out_dir: Path, tables: dict[str, str], summary: dict) -> list[Path]:
    """Write CSV tables and summary.json into ``out_dir``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in tables.items():
        path = out_dir / name
        path.write_text(text, encoding="utf-8", newline="\n")
        written.append(path)
    path = out_dir / "summary.json"
    path.write_text(json.dumps(_jsonable(summary), sort_keys=True, indent=2) + "\n", encoding="utf-8", newline="\n")
    written.append(path)
    return written


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


# ----------------------------------------------------------- experiments


def _swap(cfg: ExperimentConfig, threads: int):
    p = cfg.parameters
    trace = run_swap_sequence(p.sequence, ToySetup(p.reference_state.pair(), p.pointer_state.pair(), p.uncompute))
    rows = [(s.step, s.label, s.negativity_or, s.negativity_op, s.separable_or, s.separable_op) for s in trace.steps]
    results = {
        "alternates": trace.alternates(),
        "final_fidelity_with_first_step": fidelity(trace.states[0], trace.states[-1]),
        "steps": [dict(zip(SWAP_COLUMNS, r)) for r in rows],
    }
    return {"swap.csv": csv_text(SWAP_COLUMNS, rows)}, results, EXIT_OK


def _decay(cfg: ExperimentConfig, threads: int):
    p = cfg.parameters
    run = RunConfig(
        n=p.n,
        m=p.m,
        p_int=p.p_int,
        trials=p.trials,
        seed=cfg.seed,
        mode=p.mode,
        pointer_state=p.pointer_state.pair(),
        reference_qubits=p.reference_qubits,
        reference_bit=p.reference_bit,
        environment=p.environment,
        c=p.c,
        temperature=p.temperature,
        units=cfg.units,
    )
    result = run_decoherence_experiment(run, threads=threads)
    rows = [(c.cycle, c.fraction_pure, c.mean_coherence, c.analytic_pure) for c in result.cycles]
    ledger = decay_ledger(result)
    results = {
        "qubits_required": run.qubits_required(),
        "ledger": ledger.summary(),
        "identified_fraction": result.identified_fraction,
        "mean_pointer_purity": [c.mean_pointer_purity for c in result.cycles],
        "zero_count_policy": "cycles with fraction_pure == 0 are excluded from the fit",
    }
    code = EXIT_OK
    if p.fit:
        try:
            fit = fit_decay(result, bootstrap=p.bootstrap, seed=cfg.seed)
            results["fit"] = {
                "rate_per_interval": fit.rate_per_interval,
                "p_int_estimate": 1 - fit.rate_per_interval,
                "r_squared": fit.r_squared,
                "intervals_used": fit.intervals_used,
                "excluded_cycles": fit.excluded_cycles,
                "rate_stderr": fit.rate_stderr,
            }
        except InsufficientDataError as e:
            results["fit"] = {"error": str(e)}
            print(f"swapdec: insufficient data for decay fit: {e}", file=sys.stderr)
            code = EXIT_INSUFFICIENT
    return {"decay.csv": csv_text(DECAY_COLUMNS, rows)}, results, code


def _zeno(cfg: ExperimentConfig, threads: int):
    p = cfg.parameters
    res = zeno_experiment(
        ZenoConfig(p.m, p.trials, cfg.seed, p.epsilon, p.pointer_state.pair(), p.c, p.temperature, cfg.units)
    )
    const, surv = res.constant_after_first, res.survived
    rows = [(k, int(res.outcomes[k, 0]), bool(const[k]), bool(surv[k])) for k in range(p.trials)]
    results = {
        "constant_after_first": int(const.sum()),
        "exceptions": int(p.trials - const.sum()),
        "survival": res.survival,
        "survival_analytic": float(np.cos(p.epsilon / 2) ** (2 * p.m)) if res.prepared_outcome is not None else None,
        "ledger": res.ledger.summary(),
    }
    return {"zeno.csv": csv_text(ZENO_COLUMNS, rows)}, results, EXIT_OK


def _lg(cfg: ExperimentConfig, threads: int):
    p = cfg.parameters
    thetas = p.thetas if p.thetas is not None else [p.omega * p.tau]
    tables, results = {}, {"quantum": [], "control": []}
    quantum_rows, control_rows = [], []
    for idx, theta in enumerate(thetas):
        omega, tau = (theta, 1.0) if p.thetas is not None else (p.omega, p.tau)
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(idx, 0)))
        st = lg_from_trajectories(generate_lg_trajectories(omega, tau, p.trials, rng, "pairwise"))
        quantum_rows.append((theta, st.c21, st.c32, st.c31, st.k_value, st.k_stderr))
        results["quantum"].append({"theta": theta, "k_value": st.k_value, "k_stderr": st.k_stderr,
                                   "k_expected": lg_quantum_k(theta), "violation": st.violation})
        if p.control:
            rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(idx, 1)))
            ct = lg_from_trajectories(generate_lg_trajectories(omega, tau, p.trials, rng, "sequential"))
            control_rows.append((theta, ct.c21, ct.c32, ct.c31, ct.k_value, ct.k_stderr))
            results["control"].append({"theta": theta, "k_value": ct.k_value, "k_stderr": ct.k_stderr,
                                       "violation": ct.violation})
    tables["lg.csv"] = csv_text(LG_COLUMNS, quantum_rows)
    if p.control:
        tables["lg_control.csv"] = csv_text(LG_COLUMNS, control_rows)
    return tables, results, EXIT_OK


def _sieve(cfg: ExperimentConfig, threads: int):
    p = cfg.parameters
    catalog = ObservableCatalog([BinaryObservable(o.id, o.kind, o.target, o.axis) for o in p.catalog])
    report = verify_predictability_sieve(catalog)
    rows = [(v.first, v.second, v.commutator_norm, v.commutator_norm > 1e-10) for v in report.checked]
    tables = {"sieve.csv": csv_text(SIEVE_COLUMNS, rows)}
    results = {
        "reference_count": catalog.reference_count,
        "pointer_count": catalog.pointer_count,
        "ok": report.ok,
        "violations": [[v.first, v.second, v.commutator_norm] for v in report.violations],
    }
    if p.schedule is not None:
        s = p.schedule
        n_obs = len(catalog)
        if s.kind == "rows":
            schedule = Schedule(np.array(s.rows), s.dt)
        elif s.kind == "uniform":
            schedule = Schedule.uniform(n_obs, s.ticks, s.dt)
        else:
            schedule = Schedule.round_robin(n_obs, s.ticks, s.dt)
        schedule.validate()
        targets = sorted({o.target for o in catalog.entries} | set(p.initial_state))
        state = StateVector.product(
            {t: bloch_ket(*p.initial_state[t].pair()) if t in p.initial_state else bloch_ket(0.0) for t in targets}
        )
        observer = Observer(catalog, schedule, DissipationLedger(p.c, p.temperature, cfg.units, s.dt))
        state = observer.allocate(state)
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
        observer.run(state, rng, p.mode)
        spec = ReferenceSpec(dict(p.reference_spec))
        results["identification"] = identify_system(observer.memory, spec).value
        results["coarse_grained"] = "".join(classify_coarse_grained(observer.memory))
        results["ledger"] = observer.ledger.summary()
        tables["memory.csv"] = observer.memory.to_csv()
    return tables, results, EXIT_OK


DISPATCH = {"swap-trace": _swap, "decay": _decay, "zeno": _zeno, "lg": _lg, "sieve-check": _sieve}


# ------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swapdec", description="Decoherence as entanglement swaps between reference and pointer qubits.")
    parser.add_argument("--version", action="version", version=f"swapdec {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path, help="experiment configuration (JSON)")
        src.add_argument("--scenario", help="bundled scenario name, e.g. cat-box")
        p.add_argument("--seed", type=int, help="64-bit unsigned seed (overrides config)")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--trials", type=int, help="trial count (overrides config)")
        p.add_argument("--units", choices=("physical", "natural"))
        p.add_argument("--threads", type=int, help="worker processes; results do not depend on it")
    return parser


def _threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("SWAPDEC_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer SWAPDEC_THREADS=%r", env)
    return 1


def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        path = args.config if args.config is not None else scenario_path(args.scenario)
        cfg = load_config(path)
        if cfg.experiment != args.experiment:
            raise ConfigError(f"experiment: config is for {cfg.experiment!r}, not {args.experiment!r}")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be a 64-bit unsigned integer")
        if args.trials is not None and not hasattr(cfg.parameters, "trials"):
            raise ConfigError(f"--trials does not apply to {cfg.experiment}")
        cfg = cfg.with_overrides(seed=args.seed, units=args.units, parameters={"trials": args.trials})
        if cfg.seed is None:
            print("swapdec: warning: no seed given, using 0", file=sys.stderr)
            cfg = cfg.with_overrides(seed=0)
        out = args.out or Path(cfg.output.dir or "results")
        tables, results, code = DISPATCH[cfg.experiment](cfg, _threads(args.threads))
    except (ConfigError, OSError) as e:
        print(f"swapdec: error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except QubitCapError as e:
        print(f"swapdec: resource error: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except ValueError as e:
        print(f"swapdec: error: {e}", file=sys.stderr)
        return EXIT_VALIDATION

    summary = {
        "tool": "swapdec",
        "version": __version__,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config": cfg.model_dump(mode="json"),
        "results": results,
    }
    try:
        serialize_results(out, tables, summary)
    except OSError as e:
        print(f"swapdec: error: cannot write results to {out}: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    return code


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    sys.exit(run_cli())
