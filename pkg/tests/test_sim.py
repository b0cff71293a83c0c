"""仿真测试：投影欧拉步进、收敛、Lyapunov 监测与轨迹导出"""

import csv
import logging
import math

import numpy as np
import pytest

from modules.equilibria import optimal_intervention, social_optimum
from modules.errors import (
    DivergenceError,
    MissingReference,
    WeakCouplingViolated,
)
from modules.game import NetworkGame, spectral_norm
from modules.protocols import (
    DynamicState,
    OpenLoopState,
    ProtocolKind,
    ProtocolOptions,
    make_protocol,
)
from modules.scenarios import random_game, random_initial_state
from modules.sets import Ball, Box
from modules.sim import (
    LyapunovReferences,
    SimConfig,
    Trajectory,
    closed_loop_residual,
    convergence_metrics,
    lyapunov_value,
    simulate,
    step,
    summarize,
)

from conftest import G2_P

G2_OPT = np.array([2.0, 2.0])


def run(game, kind, x0, config, x_s=None):
    """构造协议并仿真，参考点与 Lyapunov 参考量按协议选取"""
    kind = ProtocolKind.parse(kind)
    x_opt = social_optimum(game)
    target = x_opt if x_s is None else np.asarray(x_s, dtype=float)
    options = ProtocolOptions(x_opt=x_opt, x_s=target, x0=np.asarray(x0, dtype=float))
    state = make_protocol(kind, game, options)
    references = LyapunovReferences(x_opt=x_opt, aP=np.array(game.aP))
    x_ref = x_opt
    if kind is ProtocolKind.DYNAMIC:
        x_ref = target
        references.u_s = optimal_intervention(game, target).u_opt
    traj = simulate(game, state, x0, config, x_ref, references)
    return traj, convergence_metrics(traj, x_ref), x_ref


class TestStep:
    def test_projection_holds_boundary(self):
        game = NetworkGame(G2_P, 0.25, [-1.0, -1.0], action_set=Box([(0.0, math.inf)] * 2))
        x_next, _ = step(game, OpenLoopState(np.zeros(2)), np.zeros(2), 1e-3)
        np.testing.assert_array_equal(x_next, [0.0, 0.0])

    def test_dynamic_memory_projected(self):
        game = NetworkGame(G2_P, 0.25, [1.0, 1.0], intervention_set=Box.uniform(2, -2.0, 0.0))
        state = DynamicState(np.array([0.0, -1.0]), np.array([0.7, 0.7]), game.intervention_set)
        _, state_next = step(game, state, np.zeros(2), 0.1)
        np.testing.assert_allclose(state_next.u, [0.0, -0.93], atol=1e-12)

    def test_explicit_euler_increment(self, g2):
        x = np.array([1.0, 2.0])
        x_next, _ = step(g2, OpenLoopState(np.array([0.5, 0.5])), x, 1e-2)
        expected = x + 1e-2 * (-g2.game_map(x) + 0.5)
        np.testing.assert_allclose(x_next, expected, atol=1e-15)

    def test_non_finite_state(self, g2):
        with pytest.raises(DivergenceError):
            step(g2, OpenLoopState(np.array([np.inf, 0.0])), np.zeros(2), 1e-3)

    def test_memory_ceiling(self, g2):
        # 一步后 ‖u‖ = 1e-3·1000 = 1，x 几乎不动
        state = DynamicState(np.zeros(2), np.array([1000.0, 0.0]), g2.intervention_set)
        with pytest.raises(DivergenceError, match='状态 u '):
            step(g2, state, np.zeros(2), 1e-3, bound_ceiling=0.5)
        _, state_next = step(g2, state, np.zeros(2), 1e-3, bound_ceiling=2.0)
        assert np.linalg.norm(state_next.u) == pytest.approx(1.0)


class TestSimulate:
    def test_g2_open_loop(self, g2):
        traj, metrics, _ = run(g2, 'open_loop', np.zeros(2), SimConfig(t_max=30.0))
        assert traj.converged
        assert np.linalg.norm(traj.final_x - G2_OPT) <= 1e-6
        assert metrics.lyapunov_violations == 0
        np.testing.assert_allclose(traj.u_values[-1], [0.5, 0.5], atol=1e-8)

    def test_start_at_target(self, g2):
        traj, _, _ = run(g2, 'open_loop', G2_OPT, SimConfig(t_max=30.0))
        assert len(traj) == 1
        assert traj.converged
        assert traj.t_converged == 0.0

    def test_times_increasing_and_aligned(self, g2):
        traj, _, _ = run(g2, 'open_loop', np.zeros(2), SimConfig(t_max=5.0, record_stride=7))
        assert np.all(np.diff(traj.times) > 0)
        lengths = {len(traj.times), len(traj.x_states), len(traj.u_values),
                   len(traj.lyapunov), len(traj.vi_residuals), len(traj.euler_terms)}
        assert lengths == {len(traj)}
        assert traj.times[-1] == pytest.approx(5.0)
        assert not traj.converged

    def test_recorded_states_in_action_set(self):
        game = NetworkGame(G2_P, 0.25, [1.0, 1.0], action_set=Box.uniform(2, 0.0, 1.0))
        traj, metrics, x_ref = run(game, 'open_loop', np.zeros(2), SimConfig(t_max=40.0))
        np.testing.assert_allclose(x_ref, [1.0, 1.0], atol=1e-8)
        assert all(game.action_set.contains(x, 0.0) for x in traj.x_states)
        assert traj.converged
        assert metrics.lyapunov_violations == 0

    def test_initial_state_projected(self, caplog):
        game = NetworkGame(G2_P, 0.25, [1.0, 1.0], action_set=Box.uniform(2, 0.0, 1.0))
        state = make_protocol('open_loop', game)
        with caplog.at_level(logging.WARNING, logger='modules.sim'):
            traj = simulate(game, state, [-1.0, 5.0], SimConfig(t_max=1.0), [1.0, 1.0])
        np.testing.assert_array_equal(traj.x_states[0], [0.0, 1.0])
        assert traj.warnings
        assert caplog.records

    def test_bound_ceiling(self, g2):
        state = make_protocol('open_loop', g2)
        with pytest.raises(DivergenceError):
            simulate(g2, state, np.zeros(2), SimConfig(t_max=30.0, bound_ceiling=1.0), G2_OPT)

    def test_lyapunov_nan_without_references(self, g2):
        state = make_protocol('open_loop', g2)
        traj = simulate(g2, state, np.zeros(2), SimConfig(t_max=1.0), G2_OPT)
        assert all(math.isnan(v) for v in traj.lyapunov)
        assert convergence_metrics(traj, G2_OPT).lyapunov_violations == 0

    def test_dynamic_g2(self, g2):
        traj, metrics, _ = run(g2, 'dynamic', np.zeros(2), SimConfig(t_max=100.0))
        assert traj.converged
        assert metrics.lyapunov_violations == 0
        assert traj.peaks['u'] < traj.config.bound_ceiling

    def test_dynamic_memory_stays_in_box(self):
        # x_s = (1, 1) 对应 u_s = F(x_s) = (-0.25, -0.25)；起步时 x_s - x > 0 把 u 推向上界 0
        u_set = Box.uniform(2, -2.0, 0.0)
        game = NetworkGame(G2_P, 0.25, [1.0, 1.0], intervention_set=u_set)
        traj, metrics, _ = run(game, 'dynamic', np.zeros(2), SimConfig(t_max=100.0, record_stride=1),
                               x_s=[1.0, 1.0])
        assert traj.converged
        assert metrics.lyapunov_violations == 0
        assert all(u_set.contains(u, 0.0) for u in traj.u_values)
        np.testing.assert_array_equal(traj.u_values[1], [0.0, 0.0])
        np.testing.assert_allclose(traj.u_values[-1], [-0.25, -0.25], atol=0.05)

    def test_ceiling_checked_between_records(self, g2):
        # 动态积分在 G2 上欠阻尼，‖x‖ 会先越过终值再回落
        full = run(g2, 'dynamic', np.zeros(2), SimConfig(t_max=100.0, record_stride=1))[0]
        peak, final = full.peaks['x'], float(np.linalg.norm(full.final_x))
        assert peak > final + 0.1
        sparse = SimConfig(t_max=100.0, record_stride=10 ** 7, bound_ceiling=0.5 * (peak + final))
        with pytest.raises(DivergenceError):
            run(g2, 'dynamic', np.zeros(2), sparse)

    def test_static_feedback_ignores_coupling_strength(self):
        # ‖aP‖ = 0.6，𝒰 无约束
        game = NetworkGame([[0.0, 1.0], [0.0, 0.0]], 0.6, [1.0, 1.0])
        assert spectral_norm(game.aP) > 0.5
        traj, metrics, x_ref = run(game, 'static_feedback', np.zeros(2), SimConfig(t_max=60.0))
        np.testing.assert_allclose(x_ref, [2.5, 2.5], atol=1e-8)
        assert traj.converged
        assert metrics.lyapunov_violations == 0

    @pytest.mark.slow
    def test_g2_adaptive(self, g2):
        config = SimConfig(t_max=200.0, conv_tol=1e-4, record_stride=100)
        traj, metrics, _ = run(g2, 'adaptive', np.zeros(2), config)
        assert np.linalg.norm(traj.final_x - G2_OPT) <= 1e-4
        assert metrics.lyapunov_violations == 0


class TestLyapunovValue:
    def test_open_loop(self, g2):
        refs = LyapunovReferences(x_opt=G2_OPT)
        state = OpenLoopState(np.array([0.5, 0.5]))
        assert lyapunov_value('open_loop', g2, [1.0, 1.0], state, refs) == pytest.approx(1.0)

    def test_dynamic(self, g2):
        state = DynamicState(np.array([1.0, 0.0]), G2_OPT, g2.intervention_set)
        refs = LyapunovReferences(u_s=np.array([0.5, 0.5]))
        # ½‖(1,1)‖² + ½‖(0.5,-0.5)‖²
        assert lyapunov_value('dynamic', g2, [1.0, 1.0], state, refs) == pytest.approx(1.25)

    def test_missing_reference(self, g2):
        with pytest.raises(MissingReference):
            lyapunov_value('open_loop', g2, [1.0, 1.0], OpenLoopState(np.zeros(2)), LyapunovReferences())

    def test_wrong_state(self, g2):
        refs = LyapunovReferences(u_s=np.zeros(2))
        with pytest.raises(TypeError):
            lyapunov_value('dynamic', g2, [1.0, 1.0], OpenLoopState(np.zeros(2)), refs)


class TestMetrics:
    def _synthetic(self, values):
        k = len(values)
        return Trajectory(
            protocol=ProtocolKind.OPEN_LOOP, config=SimConfig(),
            times=[float(i) for i in range(k)],
            x_states=[np.zeros(2)] * k, u_values=[np.zeros(2)] * k,
            lyapunov=list(values), vi_residuals=[0.0] * k, euler_terms=[0.0] * k,
        )

    def test_increasing_sequence_detected(self):
        metrics = convergence_metrics(self._synthetic([1.0, 2.0, 1.5, 3.0]), np.zeros(2))
        assert metrics.lyapunov_violations == 2

    def test_constant_trajectory(self):
        metrics = convergence_metrics(self._synthetic([0.0, 0.0, 0.0]), np.zeros(2))
        assert metrics.final_error == 0.0
        assert metrics.t_to_tol == 0.0
        assert metrics.lyapunov_violations == 0

    def test_euler_allowance(self):
        traj = self._synthetic([1.0, 1.2])
        traj.euler_terms = [0.0, 0.3]
        assert convergence_metrics(traj, np.zeros(2)).lyapunov_violations == 0

    def test_nan_skipped(self):
        metrics = convergence_metrics(self._synthetic([1.0, math.nan, 5.0]), np.zeros(2))
        assert metrics.lyapunov_violations == 0

    def test_t_to_tol(self, g2):
        traj, metrics, _ = run(g2, 'open_loop', np.zeros(2), SimConfig(t_max=30.0))
        assert metrics.t_to_tol == traj.t_converged
        assert metrics.final_error <= 1e-6

    def test_summary(self, g2):
        traj, metrics, _ = run(g2, 'open_loop', np.zeros(2), SimConfig(t_max=30.0))
        summary = summarize(traj, metrics)
        assert summary['protocol'] == 'open_loop'
        assert summary['converged'] is True
        assert set(summary) == {'protocol', 'converged', 't_converged', 'final_error',
                                'lyapunov_violations', 'lyapunov_allowance'}
        assert summary['lyapunov_allowance'] == 'slack_dt_plus_euler_curvature'


class TestExport:
    def test_csv_layout(self, g2, tmp_path):
        traj, _, _ = run(g2, 'open_loop', np.zeros(2), SimConfig(t_max=1.0, record_stride=100))
        path = tmp_path / 'trajectory.csv'
        traj.write_csv(str(path))
        with open(path, encoding='utf-8') as f:
            rows = list(csv.reader(f))
        assert rows[0] == ['t', 'x_1', 'x_2', 'u_1', 'u_2', 'V', 'residual']
        assert len(rows) == len(traj) + 1
        assert all(len(row) == 2 * g2.n + 3 for row in rows)
        assert float(rows[1][0]) == 0.0

    def test_closed_loop_residual_at_nash(self, g2):
        assert closed_loop_residual(g2, np.array([4 / 3, 4 / 3]), np.zeros(2)) == pytest.approx(0.0, abs=1e-12)


def _acceptance_game(seed, set_kind):
    """按无约束社会最优标定 𝒰，使 u_opt = aPᵀx_opt 落在 𝒰 内部"""
    n = 10
    game = random_game(n, 0.5, 1 if seed % 2 == 0 else -1, 0.3, seed)
    image = game.aP.T @ social_optimum(game)
    if set_kind == 'box':
        half_width = max(1.5 * float(np.max(np.abs(image))), 0.1)
        u_set = Box.uniform(n, -half_width, half_width)
    else:
        u_set = Ball(max(1.5 * float(np.linalg.norm(image)), 0.1), n)
    return game.with_sets(intervention_set=u_set)


@pytest.mark.slow
class TestProtocolConvergence:
    """n = 10 的随机博弈，前提成立的协议均应收敛且 V 单调"""

    CONFIG = SimConfig(h=1e-3, t_max=100.0, conv_tol=1e-6, record_stride=100)

    @pytest.mark.parametrize('set_kind', ['box', 'ball'])
    @pytest.mark.parametrize('seed', range(20))
    def test_applicable_protocols_converge(self, seed, set_kind):
        game = _acceptance_game(seed, set_kind)
        x0 = random_initial_state(game, seed)
        for kind in (ProtocolKind.OPEN_LOOP, ProtocolKind.STATIC_FEEDBACK, ProtocolKind.DYNAMIC):
            if kind is ProtocolKind.STATIC_FEEDBACK and spectral_norm(game.aP) >= 0.5:
                with pytest.raises(WeakCouplingViolated):
                    make_protocol(kind, game, ProtocolOptions(x_opt=social_optimum(game)))
                continue
            traj, metrics, x_ref = run(game, kind, x0, self.CONFIG)
            assert traj.converged, kind
            assert np.linalg.norm(traj.final_x - x_ref) <= 1e-6
            assert metrics.lyapunov_violations == 0, kind
            if kind is ProtocolKind.OPEN_LOOP:
                # 终点满足带干预的 VI
                assert traj.vi_residuals[-1] <= 10 * self.CONFIG.conv_tol
            if kind is ProtocolKind.DYNAMIC:
                assert all(game.intervention_set.contains(u, 1e-12) for u in traj.u_values)

    @pytest.mark.parametrize('seed', range(5))
    def test_step_refinement(self, seed):
        game = random_game(10, 0.5, 1 if seed % 2 == 0 else -1, 0.3, seed)
        x0 = random_initial_state(game, seed)
        endpoints = []
        for h in (1e-3, 5e-4):
            config = SimConfig(h=h, t_max=2.0, conv_tol=1e-12, record_stride=1000)
            traj, _, _ = run(game, 'open_loop', x0, config)
            assert traj.times[-1] == pytest.approx(2.0)
            endpoints.append(traj.final_x)
        assert np.linalg.norm(endpoints[0] - endpoints[1]) < 10 * 1e-3


@pytest.mark.slow
class TestAdaptiveAcceptance:
    @pytest.mark.parametrize('seed', range(10))
    def test_symmetric_unconstrained(self, seed):
        game = random_game(10, 0.5, 1 if seed % 2 == 0 else -1, 0.3, seed, symmetric=True)
        config = SimConfig(h=1e-3, t_max=500.0, conv_tol=1e-4, record_stride=500)
        traj, metrics, x_opt = run(game, 'adaptive', np.zeros(game.n), config)
        assert np.linalg.norm(traj.final_x - x_opt) <= 1e-4
        assert metrics.lyapunov_violations == 0
        assert set(traj.peaks) == {'x', 'z', 'w', 'K'}
        assert max(traj.peaks.values()) < config.bound_ceiling
