"""Simulator loops against hand-computed scalar trajectories and structural
invariants."""

import numpy as np
import pytest

from dgamp import (Channel, ConsensusBuffers, DivergenceError,
                   MeasurementInstance, NodeState, Schedule, SignalPrior,
                   ZeroXiOut, bayes_denoisers, chain, consensus_exchange,
                   outer_step, run_centralized, run_dgamp, run_naive,
                   sample_instance, tree8, validate_tree)
from dgamp import gamp as gamp_mod


def scalar_instance(A_vals, y_vals, noise_var=0.5, x0=0.7):
    """N = 1 instance with one measurement per node; exact hand arithmetic."""
    L = len(A_vals)
    x = np.array([x0])
    A = [np.array([[a]]) for a in A_vals]
    z = [A[l] @ x for l in range(L)]
    y = [np.array([yv]) for yv in y_vals]
    w = [y[l] - z[l] for l in range(L)]
    return MeasurementInstance(x=x, A=A, w=w, z=z, y=y,
                               M=np.ones(L, dtype=int), N=1, L=L,
                               prior=SignalPrior(1.0),
                               channel=Channel("linear", noise_var))


def mse_of(x_hat_by_t, x0=0.7):
    return [(v - x0) ** 2 for v in x_hat_by_t]


class TestScalarTwoNode:
    """2-chain, A = (0.9, -1.1), y = (0.75, -0.82), noise 0.5, dense prior,
    consensus every iteration."""

    def run(self):
        inst = scalar_instance([0.9, -1.1], [0.75, -0.82])
        sched = Schedule(T=1, J=1, iterations=3)
        return run_dgamp(inst, chain(2), sched)

    def test_mse_trajectory(self):
        traj = self.run()
        x_hat = [0.7885, 0.6668457142857143, 0.5862234666666667]
        assert traj.mse[0] == pytest.approx([0.49, 0.49], rel=1e-14)
        for t, xh in enumerate(x_hat):
            expect = (xh - 0.7) ** 2
            assert traj.mse[t + 1] == pytest.approx([expect, expect],
                                                    rel=1e-12)

    def test_variance_track(self):
        traj = self.run()
        v = [0.25, 0.21428571428571427, 0.20833333333333334]
        for t, vt in enumerate(v):
            assert traj.diagnostics["v"][t] == pytest.approx([vt, vt],
                                                             rel=1e-14)

    def test_sensitivity_track(self):
        traj = self.run()
        xi = [1.0, 4.0 / 3.0, 1.4]
        for t, x in enumerate(xi):
            assert traj.diagnostics["xi_out"][t] == pytest.approx([x, x],
                                                                  rel=1e-14)

    def test_counts_and_sweeps(self):
        traj = self.run()
        assert np.all(traj.diagnostics["eta"] == 2.0)
        assert np.array_equal(traj.cp_sweeps, [0, 1, 2, 3])


class TestScalarThreeNodeStaleAggregates:
    """3-chain with consensus every second iteration: one sweep per event, so
    the first event only reaches the neighbors and the counts stay at
    (2, 3, 2) until the warm second sweep completes the tree."""

    def run(self):
        inst = scalar_instance([0.9, -1.1, 0.6], [0.75, -0.82, 0.44])
        sched = Schedule(T=2, J=1, iterations=4)
        return run_dgamp(inst, chain(3), sched)

    def test_eta_schedule(self):
        traj = self.run()
        eta = traj.diagnostics["eta"]
        assert np.array_equal(eta[0], [2, 3, 2])
        assert np.array_equal(eta[1], [2, 3, 2])
        assert np.array_equal(eta[2], [3, 3, 3])
        assert np.array_equal(eta[3], [3, 3, 3])

    def test_estimates(self):
        traj = self.run()
        x_hat = [
            (1.0513333333333332, 1.0041818181818183, 0.7773333333333333),
            (0.8596971428571428, 0.6344276923076924, 0.84432),
            (0.4891976519337373, 0.49694267824851546, 0.723966379324672),
            (0.5968668302743985, 0.6002632678883737, 0.7219646109307956),
        ]
        for t, row in enumerate(x_hat):
            expect = [(v - 0.7) ** 2 for v in row]
            assert traj.mse[t + 1] == pytest.approx(expect, rel=1e-12)

    def test_variances(self):
        traj = self.run()
        v = [
            (0.18518518518518517, 0.15151515151515152, 0.18518518518518517),
            (0.1774891774891775, 0.1452991452991453, 0.1774891774891775),
            (0.13938911194112857, 0.1333444327284163, 0.13938911194112857),
            (0.13794533382942267, 0.1328651514297081, 0.13794533382942267),
        ]
        for t, row in enumerate(v):
            assert traj.diagnostics["v"][t] == pytest.approx(row, rel=1e-13)

    def test_sweep_count(self):
        traj = self.run()
        assert np.array_equal(traj.cp_sweeps, [0, 1, 1, 2, 2])


class TestScalarFreezing:
    """2-chain with T = 2 and per-node periods (2, 1): node 1 computes only
    on even iterations and holds every field bitwise in between."""

    def run(self):
        inst = scalar_instance([0.9, -1.1], [0.75, -0.82])
        sched = Schedule(T=2, J=1, iterations=4, T_per_node=(2, 1))
        return run_dgamp(inst, chain(2), sched)

    def test_estimates(self):
        traj = self.run()
        x_hat = [
            (0.7885, 0.7885),
            (0.8007013333333334, 0.7885),
            (0.6023722028708134, 0.6023722028708134),
            (0.6232987776884283, 0.6023722028708134),
        ]
        for t, row in enumerate(x_hat):
            expect = [(v - 0.7) ** 2 for v in row]
            assert traj.mse[t + 1] == pytest.approx(expect, rel=1e-12)

    def test_variances(self):
        traj = self.run()
        v = [
            (0.25, 0.25),
            (0.23333333333333334, 0.25),
            (0.21291866028708134, 0.21291866028708134),
            (0.21122625215889465, 0.21291866028708134),
        ]
        for t, row in enumerate(v):
            assert traj.diagnostics["v"][t] == pytest.approx(row, rel=1e-13)

    def test_frozen_fields_hold_bitwise(self):
        traj = self.run()
        for t in (1, 3):
            assert traj.mse[t + 1, 1] == traj.mse[t, 1]
            assert traj.diagnostics["v"][t, 1] == traj.diagnostics["v"][t - 1, 1]
            assert traj.diagnostics["xi_out"][t, 1] == \
                traj.diagnostics["xi_out"][t - 1, 1]

    def test_stale_sensitivity(self):
        traj = self.run()
        assert traj.diagnostics["xi_out"][3] == pytest.approx(
            [1.4026845637583893, 4.0 / 3.0], rel=1e-14)


class TestOuterStep:
    def test_scalar_example(self):
        _, outer = bayes_denoisers(SignalPrior(1.0), Channel("linear", 0.5))
        state = NodeState(node_count=1, z_tilde=np.array([0.2]), v=0.5,
                          x_hat=np.array([0.3]))
        outer_step(state, np.array([0.1]), np.array([[1.0]]), outer)
        assert state.z_hat == pytest.approx(0.1)
        assert state.xi_out == pytest.approx(1.0)
        assert state.x_msg == pytest.approx(0.2)

    def test_zero_sensitivity_raises(self, monkeypatch):
        monkeypatch.setattr(gamp_mod, "XI_OUT_FLOOR", 10.0)
        _, outer = bayes_denoisers(SignalPrior(1.0), Channel("linear", 0.5))
        state = NodeState(node_count=1, z_tilde=np.array([0.2]), v=0.5,
                          x_hat=np.array([0.3]))
        with pytest.raises(ZeroXiOut):
            outer_step(state, np.array([0.1]), np.array([[1.0]]), outer)


class TestConsensusExchange:
    def test_full_depth_reaches_exact_sums(self):
        net = chain(3)
        rng = np.random.default_rng(0)
        x_msg = rng.standard_normal((3, 4))
        xi = np.array([2.0, 4.0, 5.0])
        buffers = ConsensusBuffers(net, 4)
        x_bar, count, inv_xi = consensus_exchange(net, x_msg, xi, buffers,
                                                  sweeps=net.diameter)
        for l in range(3):
            others = [k for k in range(3) if k != l]
            assert np.allclose(x_bar[l], x_msg[others].sum(axis=0),
                               rtol=1e-14)
            assert count[l] == 2.0
            assert inv_xi[l] == pytest.approx(sum(1.0 / xi[o] for o in others))

    def test_single_sweep_counts(self):
        net = chain(3)
        buffers = ConsensusBuffers(net, 2)
        _, count, _ = consensus_exchange(net, np.zeros((3, 2)),
                                         np.ones(3), buffers, sweeps=1)
        assert np.array_equal(count, [1.0, 2.0, 1.0])

    def test_isolated_node(self):
        net = validate_tree(1, [])
        buffers = ConsensusBuffers(net, 3)
        x_bar, count, inv_xi = consensus_exchange(
            net, np.ones((1, 3)), np.ones(1), buffers, sweeps=1)
        assert not x_bar.any() and not count.any() and not inv_xi.any()


class TestSchedule:
    def test_validation(self):
        for bad in (dict(T=0, J=1, iterations=5), dict(T=1, J=0, iterations=5),
                    dict(T=1, J=1, iterations=0)):
            with pytest.raises(ValueError):
                Schedule(**bad)
        with pytest.raises(ValueError):
            Schedule(T=2, J=1, iterations=5, T_per_node=(1, 1))
        with pytest.raises(ValueError):
            Schedule(T=2, J=1, iterations=5, T_per_node=(0, 2))

    def test_periods_length_check(self):
        sched = Schedule(T=2, J=1, iterations=5, T_per_node=(2, 1))
        with pytest.raises(ValueError):
            sched.periods(3)

    def test_active_mask(self):
        sched = Schedule(T=2, J=1, iterations=6, T_per_node=(2, 1, 2, 1))
        assert np.array_equal(sched.active_mask(0, 4), [1, 1, 1, 1])
        assert np.array_equal(sched.active_mask(1, 4), [1, 0, 1, 0])
        assert np.array_equal(sched.active_mask(4, 4), [1, 1, 1, 1])

    def test_events(self):
        sched = Schedule(T=3, J=2, iterations=9)
        assert [t for t in range(9) if sched.is_event(t)] == [0, 3, 6]


@pytest.fixture(scope="module")
def medium_instance():
    net = chain(3)
    prior = SignalPrior(0.2)
    channel = Channel("linear", 1e-2)
    return net, sample_instance(net, 60, prior, channel, N=90, seed=77)


class TestRunDgamp:
    def test_deterministic(self, medium_instance):
        net, inst = medium_instance
        sched = Schedule(T=1, J=net.diameter, iterations=8)
        a = run_dgamp(inst, net, sched)
        b = run_dgamp(inst, net, sched)
        assert np.array_equal(a.mse, b.mse)

    def test_matches_centralized_under_full_consensus(self, medium_instance):
        net, inst = medium_instance
        sched = Schedule(T=1, J=net.diameter, iterations=10)
        dec = run_dgamp(inst, net, sched)
        cen = run_centralized(inst, iterations=10)
        assert dec.mse == pytest.approx(cen.mse, rel=1e-10)
        # all nodes share the estimate once aggregation is exact
        assert np.allclose(dec.mse[:, 0], dec.mse[:, 1], rtol=1e-10)
        assert np.all(dec.diagnostics["eta"] == 3.0)

    def test_single_node_equals_centralized(self):
        net = validate_tree(1, [])
        inst = sample_instance(net, 50, SignalPrior(0.2),
                               Channel("linear", 1e-2), N=60, seed=3)
        dec = run_dgamp(inst, net, Schedule(T=1, J=1, iterations=10))
        cen = run_centralized(inst, iterations=10)
        assert np.array_equal(dec.mse, cen.mse)

    def test_full_damping_is_identity(self, medium_instance):
        net, inst = medium_instance
        sched = Schedule(T=1, J=net.diameter, iterations=6)
        assert np.array_equal(run_dgamp(inst, net, sched, chi=1.0).mse,
                              run_dgamp(inst, net, sched).mse)

    def test_partial_damping_runs(self, medium_instance):
        net, inst = medium_instance
        sched = Schedule(T=1, J=net.diameter, iterations=8)
        traj = run_dgamp(inst, net, sched, chi=0.5)
        assert np.all(np.isfinite(traj.mse))
        assert traj.mse[-1].max() < traj.mse[0].max()

    def test_heterogeneous_freeze_pattern(self, medium_instance):
        net, inst = medium_instance
        sched = Schedule(T=2, J=2, iterations=6, T_per_node=(2, 1, 2))
        traj = run_dgamp(inst, net, sched)
        for t in (1, 3, 5):
            assert traj.mse[t + 1, 1] == traj.mse[t, 1]
            assert traj.mse[t + 1, 0] != traj.mse[t, 0]

    def test_input_capture(self, medium_instance):
        net, inst = medium_instance
        sched = Schedule(T=2, J=2, iterations=6, T_per_node=(2, 1, 2))
        traj = run_dgamp(inst, net, sched, collect_inputs=(0, 1))
        assert set(traj.inputs) == {0, 1}
        grab = traj.inputs[1]
        assert grab["x_tilde"].shape == (3, 90)
        assert np.all(np.isfinite(grab["x_tilde"][0]))
        assert np.all(np.isnan(grab["x_tilde"][1]))  # frozen at t = 1
        assert np.isnan(grab["eta"][1]) and grab["eta"][0] == 3.0

    def test_sweep_accounting(self, medium_instance):
        net, inst = medium_instance
        traj = run_dgamp(inst, net, Schedule(T=2, J=3, iterations=5))
        assert np.array_equal(traj.cp_sweeps, [0, 3, 3, 6, 6, 9])

    def test_divergence_guard(self, medium_instance, monkeypatch):
        net, inst = medium_instance
        monkeypatch.setattr(gamp_mod, "MSE_DIVERGENCE_LIMIT", 1e-9)
        with pytest.raises(DivergenceError) as err:
            run_dgamp(inst, net, Schedule(T=1, J=2, iterations=4))
        assert err.value.t == 0
        assert err.value.node in (0, 1, 2)

    def test_near_noiseless_recovery(self):
        # dense prior, strongly overdetermined, vanishing noise: estimates
        # should lock onto the signal
        net = chain(2)
        inst = sample_instance(net, 30, SignalPrior(1.0),
                               Channel("linear", 1e-10), N=40, seed=21)
        traj = run_dgamp(inst, net, Schedule(T=1, J=1, iterations=30))
        assert traj.mse_max[-1] < 1e-3

    def test_mse_max_property(self, medium_instance):
        net, inst = medium_instance
        traj = run_dgamp(inst, net, Schedule(T=1, J=2, iterations=5))
        assert np.array_equal(traj.mse_max, traj.mse.max(axis=1))


class TestBaselines:
    def test_centralized_columns_agree(self, medium_instance):
        _, inst = medium_instance
        traj = run_centralized(inst, iterations=8)
        assert traj.mse.shape == (9, 3)
        assert np.all(traj.mse == traj.mse[:, :1])
        assert not traj.cp_sweeps.any()

    def test_naive_rejects_negative_gamma(self, medium_instance):
        net, inst = medium_instance
        with pytest.raises(ValueError):
            run_naive(inst, net, gamma=-0.1)

    def test_naive_runs_finite(self, medium_instance):
        net, inst = medium_instance
        traj = run_naive(inst, net, gamma=0.25, iterations=8)
        assert np.all(np.isfinite(traj.mse))
        assert traj.mse.shape == (9, 3)

    def test_naive_zero_gamma_ignores_neighbors(self):
        # gamma = 0 on a chain must equal gamma = 0 on a star with the same
        # per-node data: the topology cannot matter without mixing
        net_a = chain(3)
        net_b = validate_tree(3, [(0, 1), (0, 2)])
        inst = sample_instance(net_a, 50, SignalPrior(0.2),
                               Channel("linear", 1e-2), N=60, seed=5)
        a = run_naive(inst, net_a, gamma=0.0, iterations=8)
        b = run_naive(inst, net_b, gamma=0.0, iterations=8)
        assert np.array_equal(a.mse, b.mse)

    def test_tree8_smoke(self):
        net = tree8()
        inst = sample_instance(net, 25, SignalPrior(0.2),
                               Channel("clip", 1e-2, clip_threshold=2.0),
                               N=40, seed=13)
        traj = run_dgamp(inst, net, Schedule(T=2, J=1, iterations=12))
        assert np.all(np.isfinite(traj.mse))
        assert traj.cp_sweeps[-1] == 6
