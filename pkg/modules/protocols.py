"""干预协议模块 - 开环、静态反馈、动态积分与自适应四种监管者控制器

每个协议状态提供 output(x)（当前干预 u）、rhs(x)（控制器记忆的导数）
与 advance(x, h)（一步显式欧拉推进，返回新状态）。
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .equilibria import optimal_intervention, social_optimum
from .errors import (
    AsymmetricNetwork,
    ConstrainedAdaptive,
    FeedbackPremiseViolated,
    InterventionInfeasible,
    MissingReference,
    NotInSet,
    TargetNotAssignable,
    WeakCouplingViolated,
)
from .game import NetworkGame
from .sets import MEMBERSHIP_TOL, MAX_VERTEX_DIM, Ball, Box, ConstraintSet, Subspace, as_vector

logger = logging.getLogger(__name__)


class ProtocolKind(str, Enum):
    OPEN_LOOP = 'open_loop'
    STATIC_FEEDBACK = 'static_feedback'
    DYNAMIC = 'dynamic'
    ADAPTIVE = 'adaptive'

    @classmethod
    def parse(cls, name) -> 'ProtocolKind':
        if isinstance(name, cls):
            return name
        try:
            return cls(name)
        except ValueError:
            choices = ', '.join(k.value for k in cls)
            raise ValueError(f"未知的干预协议 {name!r}，可选: {choices}") from None


class OpenLoopState:
    """开环干预：u ≡ u_opt"""

    kind = ProtocolKind.OPEN_LOOP

    def __init__(self, u_opt: np.ndarray):
        self.u_opt = np.asarray(u_opt, dtype=float)

    def output(self, x) -> np.ndarray:
        return self.u_opt

    def rhs(self, x) -> tuple:
        return ()

    def advance(self, x, h: float) -> 'OpenLoopState':
        return self

    def memory_norms(self) -> Dict[str, float]:
        return {}


class StaticFeedbackState:
    """静态反馈：u = proj_𝒰(aPᵀx)

    只保存 aPᵀ 与 𝒰，不依赖 b 与行动集合。
    """

    kind = ProtocolKind.STATIC_FEEDBACK

    def __init__(self, aP_transpose: np.ndarray, u_set: ConstraintSet):
        self.aP_transpose = np.asarray(aP_transpose, dtype=float)
        self.u_set = u_set

    def output(self, x) -> np.ndarray:
        return self.u_set.project(self.aP_transpose @ x)

    def rhs(self, x) -> tuple:
        return ()

    def advance(self, x, h: float) -> 'StaticFeedbackState':
        return self

    def memory_norms(self) -> Dict[str, float]:
        return {}


class DynamicState:
    """动态积分干预：u̇ = Π_𝒰(u, x_s - x)，u 始终在 𝒰 内"""

    kind = ProtocolKind.DYNAMIC

    def __init__(self, u: np.ndarray, x_s: np.ndarray, u_set: ConstraintSet):
        self.u = np.asarray(u, dtype=float)
        self.x_s = np.asarray(x_s, dtype=float)
        self.u_set = u_set

    def output(self, x) -> np.ndarray:
        return self.u

    def rhs(self, x) -> np.ndarray:
        return self.u_set.project_tangent(self.u, self.x_s - x)

    def advance(self, x, h: float) -> 'DynamicState':
        return DynamicState(self.u_set.project(self.u + h * (self.x_s - x)), self.x_s, self.u_set)

    def memory_norms(self) -> Dict[str, float]:
        return {'u': float(np.linalg.norm(self.u))}


class AdaptiveState:
    """自适应干预：u = Kx，增益 K 由 (z, w, K) 扩展动态决定

    ż = -z + Kx + b + u
    ẇ = -w + e·xᵀx
    K̇ = e·xᵀ
    其中 e = x - z - w。监管者只知道 b。
    """

    kind = ProtocolKind.ADAPTIVE

    def __init__(self, z: np.ndarray, w: np.ndarray, K: np.ndarray, b: np.ndarray):
        self.z = np.asarray(z, dtype=float)
        self.w = np.asarray(w, dtype=float)
        self.K = np.asarray(K, dtype=float)
        self.b = np.asarray(b, dtype=float)

    def output(self, x) -> np.ndarray:
        return self.K @ x

    def error(self, x) -> np.ndarray:
        return x - self.z - self.w

    def rhs(self, x) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """返回 (ż, ẇ, K̇)"""
        u = self.K @ x
        e = x - self.z - self.w
        dz = -self.z + u + self.b + u
        dw = -self.w + e * float(x @ x)
        dK = np.outer(e, x)
        return dz, dw, dK

    def advance(self, x, h: float) -> 'AdaptiveState':
        dz, dw, dK = self.rhs(x)
        return AdaptiveState(self.z + h * dz, self.w + h * dw, self.K + h * dK, self.b)

    def memory_norms(self) -> Dict[str, float]:
        return {
            'z': float(np.linalg.norm(self.z)),
            'w': float(np.linalg.norm(self.w)),
            'K': float(np.linalg.norm(self.K)),
        }


ProtocolState = Union[OpenLoopState, StaticFeedbackState, DynamicState, AdaptiveState]


@dataclass
class ProtocolOptions:
    """构造协议所需的可选信息

    x_opt 与 u_opt 属于监管者之外的验证信息，仅用于检查前提条件。
    """

    x_opt: Optional[np.ndarray] = None
    u_opt: Optional[np.ndarray] = None
    x_s: Optional[np.ndarray] = None
    verify_target: bool = True
    x0: Optional[np.ndarray] = None


def _box_image_bounds(matrix: np.ndarray, box: Box) -> Tuple[np.ndarray, np.ndarray]:
    """线性映射 M 作用在有界 Box 上的逐分量取值范围"""
    center = 0.5 * (box.lo + box.hi)
    radius = 0.5 * (box.hi - box.lo)
    mid = matrix @ center
    spread = np.abs(matrix) @ radius
    return mid - spread, mid + spread


def covers_feedback_image(game: NetworkGame) -> bool:
    """判断 aPᵀx̄ ∈ 𝒰 是否对所有 x̄ ∈ 𝒳 成立

    成立时静态反馈无需弱耦合条件。无法判定的情形返回 False。
    """
    u_set = game.intervention_set
    if u_set.is_full:
        return True
    matrix = game.aP.T
    action_set = game.action_set
    if isinstance(u_set, Subspace):
        # 无界方向上只有零行才能保持固定坐标为零
        rows = matrix[u_set.pinned]
        if not np.any(rows):
            return True
        if not action_set.is_bounded:
            return False
        low, high = _box_image_bounds(rows, action_set)
        return bool(np.all(low == 0) and np.all(high == 0))
    if not action_set.is_bounded:
        return False
    if isinstance(u_set, Box):
        low, high = _box_image_bounds(matrix, action_set)
        return bool(np.all(low >= u_set.lo) and np.all(high <= u_set.hi))
    if isinstance(u_set, Ball):
        if action_set.dim > MAX_VERTEX_DIM:
            return False
        # 凸函数 ‖aPᵀx‖ 的最大值在顶点处取得
        peak = max(float(np.linalg.norm(matrix @ v)) for v in action_set.vertices())
        return peak <= u_set.radius
    return False


def make_protocol(kind, game: NetworkGame, options: Optional[ProtocolOptions] = None) -> ProtocolState:
    """检查前提条件并构造初始协议状态

    Args:
        kind: 协议种类
        game: 网络博弈
        options: 可选信息（x_opt、u_opt、x_s、x0 等）

    Returns:
        ProtocolState: 初始状态
    """
    kind = ProtocolKind.parse(kind)
    options = options or ProtocolOptions()
    n = game.n
    u_set = game.intervention_set

    if kind is ProtocolKind.OPEN_LOOP:
        if options.u_opt is not None:
            u_opt = as_vector(options.u_opt, n, 'u_opt')
            if not u_set.contains(u_opt, MEMBERSHIP_TOL):
                raise InterventionInfeasible("给定的 u_opt 不在干预集合内")
            return OpenLoopState(u_opt)
        x_opt = options.x_opt if options.x_opt is not None else social_optimum(game)
        verdict = optimal_intervention(game, x_opt)
        if not verdict.feasible:
            raise InterventionInfeasible(
                f"x_opt 不是可指派均衡，最近残差 {verdict.residual:.3e}")
        return OpenLoopState(verdict.u_opt)

    if kind is ProtocolKind.STATIC_FEEDBACK:
        state = StaticFeedbackState(game.aP.T.copy(), u_set)
        if covers_feedback_image(game):
            return state
        report = game.check_assumptions()
        if not report.weak_coupling_ok:
            raise WeakCouplingViolated(
                f"‖aP‖ = {report.aP_spectral_norm:.4g} ≥ 0.5，且干预集合不覆盖 aPᵀ𝒳")
        if options.x_opt is None:
            logger.warning("未提供 x_opt，无法验证 aPᵀx_opt ∈ 𝒰，按未验证方式继续")
            return state
        image = game.aP.T @ as_vector(options.x_opt, n, 'x_opt')
        if not u_set.contains(image, MEMBERSHIP_TOL):
            raise FeedbackPremiseViolated("aPᵀx_opt 不在干预集合内")
        return state

    if kind is ProtocolKind.DYNAMIC:
        if options.x_s is None:
            raise MissingReference("动态干预需要目标点 x_s")
        x_s = as_vector(options.x_s, n, 'x_s')
        if options.verify_target:
            try:
                verdict = optimal_intervention(game, x_s)
            except NotInSet:
                raise TargetNotAssignable("x_s 不在行动集合内") from None
            if not verdict.feasible:
                raise TargetNotAssignable(
                    f"x_s 不属于可指派均衡集合，最近残差 {verdict.residual:.3e}")
        else:
            logger.warning("跳过 x_s 的可指派性验证")
        return DynamicState(np.zeros(n), x_s, u_set)

    if not game.is_symmetric:
        raise AsymmetricNetwork("自适应干预要求 P = Pᵀ")
    if not (game.action_set.is_full and u_set.is_full):
        raise ConstrainedAdaptive("自适应干预要求行动与干预均无约束")
    x0 = np.zeros(n) if options.x0 is None else as_vector(options.x0, n, 'x0')
    # z(0) = x(0)，w(0) = 0，K(0) = 0，因此 e(0) = 0
    return AdaptiveState(x0.copy(), np.zeros(n), np.zeros((n, n)), game.b.copy())


def protocol_output(state: ProtocolState, x) -> np.ndarray:
    """当前干预 u"""
    return state.output(x)


def protocol_rhs(state: ProtocolState, x):
    """控制器记忆的导数；无记忆协议返回空元组"""
    return state.rhs(x)
