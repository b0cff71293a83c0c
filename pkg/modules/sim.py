"""仿真模块 - 玩家与监管者耦合系统的投影欧拉积分、轨迹记录与 Lyapunov 监测"""

import csv
import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from .errors import DivergenceError, MissingReference
from .game import NetworkGame
from .protocols import AdaptiveState, DynamicState, ProtocolKind, ProtocolState
from .sets import MEMBERSHIP_TOL, as_vector

logger = logging.getLogger(__name__)

# 违例判定的容许量：slack·Δt 加上累计欧拉二阶项
LYAPUNOV_ALLOWANCE = 'slack_dt_plus_euler_curvature'


@dataclass
class SimConfig:
    """仿真参数"""

    h: float = 1e-3
    t_max: float = 100.0
    conv_tol: float = 1e-6
    record_stride: int = 10
    lyapunov_slack: float = 1e-6
    bound_ceiling: float = 1e6

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"步长 h 必须为正: {self.h}")
        if not self.t_max > 0:
            raise ValueError(f"仿真时长 t_max 必须为正: {self.t_max}")
        if not self.conv_tol > 0:
            raise ValueError(f"收敛容差 conv_tol 必须为正: {self.conv_tol}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError(f"记录间隔 record_stride 必须是正整数: {self.record_stride}")
        self.record_stride = int(self.record_stride)

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> 'SimConfig':
        data = data or {}
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"未知的仿真参数: {sorted(unknown)}")
        return cls(**data)

    def with_overrides(self, **overrides) -> 'SimConfig':
        """用非空的覆盖值生成新配置"""
        values = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **values)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class LyapunovReferences:
    """Lyapunov 函数所需的验证侧信息（控制器本身不读取）"""

    x_opt: Optional[np.ndarray] = None
    u_s: Optional[np.ndarray] = None
    aP: Optional[np.ndarray] = None


@dataclass
class Trajectory:
    """仿真轨迹，各序列等长，时间严格递增"""

    protocol: ProtocolKind
    config: SimConfig
    times: List[float] = field(default_factory=list)
    x_states: List[np.ndarray] = field(default_factory=list)
    u_values: List[np.ndarray] = field(default_factory=list)
    lyapunov: List[float] = field(default_factory=list)
    vi_residuals: List[float] = field(default_factory=list)
    converged: bool = False
    t_converged: Optional[float] = None
    warnings: List[str] = field(default_factory=list)
    peaks: Dict[str, float] = field(default_factory=dict)
    # 截至各记录点累计的欧拉二阶项，供 Lyapunov 违例判定扣除
    euler_terms: List[float] = field(default_factory=list)
    final_state: Optional[ProtocolState] = None

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final_x(self) -> np.ndarray:
        return self.x_states[-1]

    def write_csv(self, path: str):
        """导出 CSV：t, x_1..x_n, u_1..u_n, V, residual"""
        n = len(self.x_states[0]) if self.x_states else 0
        header = (['t'] + [f'x_{i + 1}' for i in range(n)]
                  + [f'u_{i + 1}' for i in range(n)] + ['V', 'residual'])
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for k, t in enumerate(self.times):
                row = [t, *self.x_states[k], *self.u_values[k], self.lyapunov[k], self.vi_residuals[k]]
                writer.writerow([repr(float(v)) for v in row])


@dataclass
class ConvergenceMetrics:
    final_error: float
    t_to_tol: Optional[float]
    lyapunov_violations: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def lyapunov_value(kind, game: NetworkGame, x, state: ProtocolState,
                   references: LyapunovReferences) -> float:
    """各协议收敛证明中的 Lyapunov 函数值

    开环/静态反馈：½‖x - x_opt‖²
    动态积分：½‖x - x_s‖² + ½‖u - u_s‖²
    自适应：½‖e‖² + ½‖K - aP‖_F²
    """
    kind = ProtocolKind.parse(kind)
    x = as_vector(x, game.n, 'x')
    if kind in (ProtocolKind.OPEN_LOOP, ProtocolKind.STATIC_FEEDBACK):
        if references.x_opt is None:
            raise MissingReference(f"{kind.value} 的 Lyapunov 值需要 x_opt")
        diff = x - references.x_opt
        return 0.5 * float(diff @ diff)
    if kind is ProtocolKind.DYNAMIC:
        if references.u_s is None:
            raise MissingReference("动态干预的 Lyapunov 值需要 u_s")
        if not isinstance(state, DynamicState):
            raise TypeError("动态干预的 Lyapunov 值需要 DynamicState")
        dx = x - state.x_s
        du = state.u - references.u_s
        return 0.5 * float(dx @ dx) + 0.5 * float(du @ du)
    if references.aP is None:
        raise MissingReference("自适应干预的 Lyapunov 值需要 aP")
    if not isinstance(state, AdaptiveState):
        raise TypeError("自适应干预的 Lyapunov 值需要 AdaptiveState")
    e = state.error(x)
    psi = state.K - references.aP
    return 0.5 * float(e @ e) + 0.5 * float(np.sum(psi * psi))


def closed_loop_residual(game: NetworkGame, x: np.ndarray, u: np.ndarray) -> float:
    """当前干预下的 VI 自然残差 ‖x - proj_𝒳(x - (F(x) - u))‖"""
    drift = game.F_matrix @ x - game.b - u
    return float(np.linalg.norm(x - game.action_set.project(x - drift)))


def _check_bounds(x: np.ndarray, state: ProtocolState, bound_ceiling: float) -> Dict[str, float]:
    """返回 x 与控制器记忆的范数，非有限或超过上限时抛出 DivergenceError"""
    norms = {'x': float(np.linalg.norm(x)), **state.memory_norms()}
    for name, norm in norms.items():
        if not math.isfinite(norm):
            raise DivergenceError(f"状态 {name} 出现非有限值")
        if norm > bound_ceiling:
            raise DivergenceError(f"状态 {name} 的范数 {norm:.3e} 超过上限 {bound_ceiling:.3e}")
    return norms


def _euler_step(game: NetworkGame, state: ProtocolState, x: np.ndarray, h: float,
                bound_ceiling: float = math.inf):
    u = state.output(x)
    dx = h * (u - game.F_matrix @ x + game.b)
    x_next = game.action_set.project(x + dx)
    state_next = state.advance(x, h)
    _check_bounds(x_next, state_next, bound_ceiling)
    return x_next, state_next, dx


def step(game: NetworkGame, state: ProtocolState, x: np.ndarray, h: float,
         bound_ceiling: float = math.inf) -> Tuple[np.ndarray, ProtocolState]:
    """一步投影显式欧拉

    x⁺ = proj_𝒳(x + h(-F(x) + u))，控制器记忆用同一 x 推进。
    推进后的行动或记忆出现非有限值、或范数超过 bound_ceiling 时抛出 DivergenceError。
    """
    x_next, state_next, _ = _euler_step(game, state, x, h, bound_ceiling)
    return x_next, state_next


def _euler_curvature(state: ProtocolState, state_next: ProtocolState, x: np.ndarray,
                     dx: np.ndarray, h: float) -> float:
    """一步欧拉对二次 Lyapunov 函数引入的二阶项 ½‖Δ‖²（Δ 为投影前的增量）

    V 是状态的二次函数且 Hessian 为单位阵，因此
    V(s + Δ) = V(s) + h·V̇(s) + ½‖Δ‖²，投影只会让 V 更小。
    """
    if isinstance(state, AdaptiveState):
        de = dx - (state_next.z - state.z) - (state_next.w - state.w)
        dK = state_next.K - state.K
        return 0.5 * (float(de @ de) + float(np.sum(dK * dK)))
    total = float(dx @ dx)
    if isinstance(state, DynamicState):
        du = h * (state.x_s - x)
        total += float(du @ du)
    return 0.5 * total


def simulate(game: NetworkGame, state: ProtocolState, x0, config: SimConfig,
             x_ref, references: Optional[LyapunovReferences] = None) -> Trajectory:
    """反复推进直到 ‖x - x_ref‖ ≤ conv_tol 或到达 t_max

    Args:
        game: 网络博弈
        state: 初始协议状态
        x0: 初始行动（不在 𝒳 内时投影进去并记录警告）
        config: 仿真参数
        x_ref: 收敛参考点（x_opt 或 x_s），由调用方提供
        references: Lyapunov 参考量，缺省时 V 记为 NaN

    Returns:
        Trajectory: 仿真轨迹
    """
    x = as_vector(x0, game.n, 'x0')
    x_ref = as_vector(x_ref, game.n, 'x_ref')
    traj = Trajectory(protocol=state.kind, config=config)

    if not game.action_set.contains(x, MEMBERSHIP_TOL):
        message = f"初始点不在行动集合内，已投影（距离 {game.action_set.distance(x):.3e}）"
        logger.warning(message)
        traj.warnings.append(message)
        x = game.action_set.project(x)

    def record(t: float, x: np.ndarray, state: ProtocolState):
        u = state.output(x)
        value = math.nan
        if references is not None:
            try:
                value = lyapunov_value(state.kind, game, x, state, references)
            except MissingReference:
                pass
        traj.times.append(t)
        traj.x_states.append(x.copy())
        traj.u_values.append(np.array(u, dtype=float))
        traj.lyapunov.append(value)
        traj.vi_residuals.append(closed_loop_residual(game, x, u))

        for name, norm in _check_bounds(x, state, config.bound_ceiling).items():
            traj.peaks[name] = max(traj.peaks.get(name, 0.0), norm)

    h = config.h
    n_steps = int(math.ceil(config.t_max / h - 1e-9))
    logger.info("开始仿真: 协议=%s, h=%g, 步数上限=%d", state.kind.value, h, n_steps)

    traj.euler_terms.append(0.0)
    record(0.0, x, state)
    if np.linalg.norm(x - x_ref) <= config.conv_tol:
        traj.converged = True
        traj.t_converged = 0.0
        traj.final_state = state
        return traj

    curvature = 0.0
    for k in range(1, n_steps + 1):
        x_next, state_next, dx = _euler_step(game, state, x, h, config.bound_ceiling)
        curvature += _euler_curvature(state, state_next, x, dx, h)
        x, state = x_next, state_next
        t = k * h
        done = np.linalg.norm(x - x_ref) <= config.conv_tol
        if done or k % config.record_stride == 0 or k == n_steps:
            traj.euler_terms.append(curvature)
            record(t, x, state)
        if done:
            traj.converged = True
            traj.t_converged = t
            break

    traj.final_state = state
    logger.info("仿真结束: converged=%s, t=%g", traj.converged, traj.times[-1])
    return traj


def convergence_metrics(traj: Trajectory, x_target, conv_tol: Optional[float] = None,
                        lyapunov_slack: Optional[float] = None) -> ConvergenceMetrics:
    """终点误差、首次进入容差的时间与 Lyapunov 违例次数

    相邻记录点 k、k+1 满足 V_{k+1} > V_k + slack·(t_{k+1} - t_k) + C_{k+1} - C_k 时计一次违例，
    C 为累计的欧拉二阶项，连续时间的 V̇ ≤ 0 在离散后恰好只差这一项。
    """
    conv_tol = traj.config.conv_tol if conv_tol is None else conv_tol
    slack = traj.config.lyapunov_slack if lyapunov_slack is None else lyapunov_slack
    x_target = np.asarray(x_target, dtype=float)

    errors = [float(np.linalg.norm(x - x_target)) for x in traj.x_states]
    t_to_tol = next((t for t, err in zip(traj.times, errors) if err <= conv_tol), None)

    violations = 0
    for k in range(len(traj.lyapunov) - 1):
        v_now, v_next = traj.lyapunov[k], traj.lyapunov[k + 1]
        if math.isnan(v_now) or math.isnan(v_next):
            continue
        allowance = slack * (traj.times[k + 1] - traj.times[k])
        if traj.euler_terms:
            allowance += traj.euler_terms[k + 1] - traj.euler_terms[k]
        if v_next > v_now + allowance:
            violations += 1

    return ConvergenceMetrics(final_error=errors[-1], t_to_tol=t_to_tol, lyapunov_violations=violations)


def summarize(traj: Trajectory, metrics: ConvergenceMetrics) -> dict:
    """summary.json 的内容"""
    return {
        'protocol': traj.protocol.value,
        'converged': traj.converged,
        't_converged': traj.t_converged,
        'final_error': metrics.final_error,
        'lyapunov_violations': metrics.lyapunov_violations,
        'lyapunov_allowance': LYAPUNOV_ALLOWANCE,
    }


def parallel_map(func: Callable, items: Iterable, workers: int = 1) -> list:
    """并行执行相互独立的仿真任务，结果顺序与输入一致

    每个任务只依赖自身参数，因此结果与调度无关。func 必须是模块级函数。
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
