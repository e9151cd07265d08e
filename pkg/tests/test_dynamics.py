from math import cos, pi, sqrt

import numpy as np
import pytest

from swapdec.analysis import correlator
from swapdec.core import MAX_QUBITS, QubitCapError, StateVector, bloch_ket, fidelity, partial_trace
from swapdec.dynamics import (
    LG_PAIRS,
    Decomposition,
    RunConfig,
    ToySetup,
    ZenoConfig,
    analytic_prob_pure,
    couple_environment,
    generate_lg_trajectories,
    run_decoherence_experiment,
    run_swap_sequence,
    run_zeno,
    zeno_experiment,
)


def pointer_register(theta=pi / 2):
    state = StateVector.product({"observer": bloch_ket(0), "reference": bloch_ket(pi), "pointer": bloch_ket(theta)})
    return state, Decomposition.build(["reference"], ["pointer"], [])


class TestDecomposition:
    def test_toy_setup_is_consistent(self):
        setup = ToySetup()
        setup.decomposition().validate(setup.prepare(), {"observer"})

    def test_overlap_rejected(self):
        d = Decomposition(["r"], ["r"], {"x"}, {"r", "x"})
        with pytest.raises(ValueError):
            d.validate()

    def test_env_p_must_contain_r(self):
        d = Decomposition(["r"], ["p"], {"p"}, set())
        with pytest.raises(ValueError):
            d.validate()


class TestSwapSequence:
    def test_single_r(self):
        (step,) = run_swap_sequence(["R"]).steps
        assert step.negativity_or == pytest.approx(0.5, abs=1e-12)
        assert step.negativity_op == pytest.approx(0.0, abs=1e-12)

    def test_r_then_p(self):
        last = run_swap_sequence(["R", "P"]).steps[-1]
        assert (last.negativity_or, last.negativity_op) == pytest.approx((0.0, 0.5), abs=1e-12)

    def test_round_trip(self):
        trace = run_swap_sequence(["R", "P", "R"])
        assert [(s.negativity_or, s.negativity_op) for s in trace.steps] == pytest.approx(
            [(0.5, 0.0), (0.0, 0.5), (0.5, 0.0)], abs=1e-12
        )
        assert fidelity(trace.states[0], trace.states[-1]) >= 1 - 1e-9
        assert trace.alternates()

    def test_long_alternation(self):
        seq = list("RPRPPRRPR")
        trace = run_swap_sequence(seq)
        assert trace.alternates()
        assert [s.label for s in trace.steps] == seq

    def test_register_mode_keeps_both_links(self):
        # distinct observer qubits per observable: nothing is un-computed
        last = run_swap_sequence(["R", "P"], ToySetup(uncompute=False)).steps[-1]
        assert (last.negativity_or, last.negativity_op) == pytest.approx((0.5, 0.5), abs=1e-12)

    def test_environment_untouched(self):
        state = run_swap_sequence(["R", "P", "R"]).states[-1]
        for env in ("env_R", "env_P"):
            np.testing.assert_allclose(partial_trace(state, [env]).entries, np.diag([1, 0]), atol=1e-12)

    def test_empty(self):
        with pytest.raises(ValueError):
            run_swap_sequence([])


class TestCoupleEnvironment:
    def test_never_fires_at_zero(self, rng):
        state, d = pointer_register()
        for _ in range(100):
            new, fired = couple_environment(state, d, rng, 0.0)
            assert not fired and new is state

    def test_certain_coupling_dephases(self, rng):
        state, d = pointer_register()
        state, fired = couple_environment(state, d, rng, 1.0)
        assert fired and d.pointer_qubits == ["pointer", "xi1"]
        np.testing.assert_allclose(partial_trace(state, ["pointer"]).entries, np.diag([0.5, 0.5]), atol=1e-12)
        d.validate(state, {"observer"})

    def test_frequency(self, rng):
        state, d = pointer_register()
        fired = [couple_environment(state, d, rng, 0.3)[1] for _ in range(10_000)]
        assert abs(np.mean(fired) - 0.3) <= 0.014

    def test_compress_matches_retain(self):
        a, da = pointer_register(1.1)
        b, db = pointer_register(1.1)
        ra, rb = np.random.default_rng(5), np.random.default_rng(5)
        for _ in range(6):
            a, _ = couple_environment(a, da, ra, 1.0)
            b, _ = couple_environment(b, db, rb, 1.0, compress=True)
        assert a.num_qubits == 9 and b.num_qubits == 4
        keep = ["observer", "reference", "pointer"]
        np.testing.assert_allclose(partial_trace(a, keep).entries, partial_trace(b, keep).entries, atol=1e-12)

    def test_cap(self, rng):
        roles = ["pointer"] + [f"q{i}" for i in range(MAX_QUBITS - 1)]
        state = StateVector.zeros(roles)
        d = Decomposition.build([], ["pointer"], roles[1:])
        with pytest.raises(QubitCapError, match="lower"):
            couple_environment(state, d, rng, 1.0)


class TestAnalytic:
    def test_no_reference_ops(self):
        assert analytic_prob_pure(0.37, 12, 1) == 1.0

    def test_certain_coupling(self):
        assert analytic_prob_pure(1.0, 3, 2) == 0.0

    def test_value(self):
        assert analytic_prob_pure(0.1, 2, 3) == pytest.approx(0.6561, abs=1e-15)
        assert analytic_prob_pure(0.1, 10, 3) == pytest.approx(0.12157665459056935, rel=1e-15)


class TestDecay:
    def test_no_coupling(self):
        res = run_decoherence_experiment(RunConfig(n=3, m=5, p_int=0.0, trials=50, seed=2))
        assert all(c.fraction_pure == 1.0 for c in res.cycles)
        assert all(c.mean_coherence == pytest.approx(0.5, abs=1e-12) for c in res.cycles)
        assert res.identified_fraction == 1.0
        assert res.recorded_observations == 50 * 5 * 2

    def test_recorded_mode_collapses_pointer(self):
        res = run_decoherence_experiment(RunConfig(n=2, m=3, p_int=0.0, trials=20, seed=2, mode="recorded"))
        assert res.cycles[0].mean_coherence == pytest.approx(0.5)
        assert res.cycles[1].mean_coherence == pytest.approx(0.0, abs=1e-12)
        assert res.recorded_observations == 20 * 3 * 2

    def test_budget_rejected_upfront(self):
        cfg = RunConfig(n=3, m=10, p_int=0.1, trials=1)
        with pytest.raises(QubitCapError, match="requires 23 qubits"):
            run_decoherence_experiment(cfg)
        cfg.environment = "compress"
        assert cfg.qubits_required() == 5

    def test_statistics(self):
        cfg = RunConfig(n=3, m=6, p_int=0.15, trials=3000, seed=11, environment="compress")
        res = run_decoherence_experiment(cfg)
        for c in res.cycles:
            sigma = sqrt(c.analytic_pure * (1 - c.analytic_pure) / cfg.trials)
            assert abs(c.fraction_pure - c.analytic_pure) <= 3 * sigma
            assert c.mean_coherence == pytest.approx(0.5 * c.fraction_pure, abs=1e-12)
        assert np.all(np.diff(res.fraction_pure) <= 0)

    def test_retain_and_compress_agree(self):
        base = dict(n=3, m=4, p_int=0.3, trials=200, seed=8)
        a = run_decoherence_experiment(RunConfig(**base))
        b = run_decoherence_experiment(RunConfig(**base, environment="compress"))
        np.testing.assert_array_equal(a.fraction_pure, b.fraction_pure)
        np.testing.assert_allclose(a.mean_coherence, b.mean_coherence, atol=1e-12)

    def test_deterministic(self):
        cfg = RunConfig(n=2, m=5, p_int=0.2, trials=300, seed=99)
        a, b = run_decoherence_experiment(cfg), run_decoherence_experiment(cfg)
        assert a.cycles == b.cycles

    def test_threads_do_not_change_results(self):
        cfg = RunConfig(n=3, m=4, p_int=0.2, trials=120, seed=4)
        assert run_decoherence_experiment(cfg, threads=1).cycles == run_decoherence_experiment(cfg, threads=3).cycles

    def test_monotone_in_p_and_n(self):
        # common random numbers make these comparisons exact, not statistical
        grid = {}
        for p in (0.05, 0.2, 0.5):
            for n in (2, 3, 5):
                res = run_decoherence_experiment(RunConfig(n=n, m=4, p_int=p, trials=400, seed=3, environment="compress"))
                grid[p, n] = res.fraction_pure
        for n in (2, 3, 5):
            assert np.all(grid[0.05, n] >= grid[0.2, n]) and np.all(grid[0.2, n] >= grid[0.5, n])
        for p in (0.05, 0.2, 0.5):
            assert np.all(grid[p, 2] >= grid[p, 3]) and np.all(grid[p, 3] >= grid[p, 5])

    @pytest.mark.parametrize("kw", [dict(n=0), dict(m=0), dict(trials=0), dict(p_int=1.5)])
    def test_invalid_config(self, kw):
        base = dict(n=2, m=2, p_int=0.1)
        with pytest.raises(ValueError):
            RunConfig(**{**base, **kw})


class TestZeno:
    @pytest.mark.parametrize("seed", range(10))
    def test_frozen_after_first(self, seed):
        out = run_zeno(50, np.random.default_rng(seed))
        assert len(set(out[1:])) == 1 and out[1] == out[0]

    def test_eigenstate(self, rng):
        assert run_zeno(20, rng, pointer_state=(0.0, 0.0)) == [0] * 20

    def test_first_outcome_is_random(self):
        firsts = {run_zeno(3, np.random.default_rng(s))[0] for s in range(20)}
        assert firsts == {0, 1}

    def test_slow_evolution_survival(self):
        res = zeno_experiment(ZenoConfig(m=10, trials=3000, seed=1, epsilon=0.2, pointer_state=(0.0, 0.0)))
        expected = cos(0.1) ** 20
        assert abs(res.survival - expected) <= 3 * sqrt(expected * (1 - expected) / 3000)
        assert res.ledger.observation_count == 30_000


class TestLGTrajectories:
    def corr(self, traj):
        return [correlator(traj.pairs[p]) for p in LG_PAIRS]

    def test_frozen_dynamics(self, rng):
        assert self.corr(generate_lg_trajectories(1.0, 0.0, 200, rng)) == [1.0, 1.0, 1.0]

    def test_pi_rotation(self, rng):
        assert self.corr(generate_lg_trajectories(pi, 1.0, 200, rng)) == [-1.0, -1.0, 1.0]

    def test_pi_over_3(self):
        c21, c32, c31 = self.corr(generate_lg_trajectories(pi / 3, 1.0, 4000, np.random.default_rng(3)))
        tol = 3 * sqrt((1 - 0.25) / 4000)
        assert abs(c21 - 0.5) <= tol and abs(c32 - 0.5) <= tol and abs(c31 + 0.5) <= tol

    def test_pairwise_batches_are_separate(self, rng):
        traj = generate_lg_trajectories(0.4, 1.0, 10, rng)
        assert traj.trials_per_pair == 10 and set(traj.pairs) == set(LG_PAIRS)

    def test_sequential_protocol(self, rng):
        traj = generate_lg_trajectories(pi / 2, 1.0, 2000, rng, protocol="sequential")
        c21, c32, c31 = self.corr(traj)
        # a collapse at t2 makes C31 = C21 * C32 in expectation (here ~0)
        assert abs(c31) <= 3 / sqrt(2000)

    def test_bad_protocol(self, rng):
        with pytest.raises(ValueError):
            generate_lg_trajectories(1.0, 1.0, 1, rng, protocol="weak")
