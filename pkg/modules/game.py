"""网络博弈模块 - 线性二次网络博弈的收益、社会福利、映射 F/H 与谱条件检查"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import (
    InterventionSetExcludesOrigin,
    InvalidGameError,
    SelfLoopForbidden,
    UnsupportedActionSet,
    WeightOutOfRange,
)
from .sets import Box, ConstraintSet, FullSpace, as_vector

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12
POWER_ITER_TOL = 1e-12
POWER_ITER_MAX = 10_000
WEAK_COUPLING_BOUND = 0.5


def spectral_norm(matrix, tol: float = POWER_ITER_TOL, max_iters: int = POWER_ITER_MAX) -> float:
    """用 MᵀM 上的幂迭代估计谱范数 ‖M‖

    Args:
        matrix: 实矩阵
        tol: Rayleigh 商的相对收敛容差
        max_iters: 最大迭代次数

    Returns:
        float: 最大奇异值
    """
    m = np.asarray(matrix, dtype=float)
    gram = m.T @ m
    if not np.any(gram):
        return 0.0
    # 固定种子的起始向量，几乎不可能与主特征向量正交
    v = np.random.default_rng(0).standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    rho = 0.0
    for k in range(max_iters):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            break
        v = w / norm
        rho_new = float(v @ gram @ v)
        if abs(rho_new - rho) <= tol * rho_new:
            rho = rho_new
            logger.debug("幂迭代在第 %d 步收敛", k + 1)
            break
        rho = rho_new
    else:
        logger.debug("幂迭代达到上限 %d 步，使用当前估计", max_iters)
    return math.sqrt(max(rho, 0.0))


@dataclass
class AssumptionReport:
    """谱条件与弱耦合条件的检查结果"""

    assumption1_ok: bool
    symmetric: bool
    lambda_min_PPt: float
    lambda_max_PPt: float
    margin: float
    aP_spectral_norm: float
    assumption2_ok: bool
    weak_coupling_ok: bool
    decoupled: bool

    def to_dict(self) -> dict:
        return asdict(self)


class NetworkGame:
    """线性二次网络博弈

    玩家 i 的收益为 U_i = -½x_i² + x_i(a·z_i + b_i) + x_i·u_i，其中 z = Px 为邻居聚合量。
    P 的第 i 行第 j 列表示玩家 j 对玩家 i 的影响。
    """

    def __init__(self, P, a: float, b, action_set: Optional[ConstraintSet] = None,
                 intervention_set: Optional[ConstraintSet] = None,
                 allow_any_weights: bool = False):
        """
        Args:
            P: n×n 邻接矩阵，对角线为零
            a: 耦合系数
            b: 独立边际收益向量
            action_set: 行动集合（Box 或全空间，默认无约束）
            intervention_set: 干预集合（默认全空间），必须包含原点
            allow_any_weights: 允许 P 的元素超出 [0, 1]（仅用于实验）
        """
        P = np.array(P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
            raise InvalidGameError(f"P 必须是非空方阵，实际形状 {P.shape}")
        if not np.all(np.isfinite(P)):
            raise InvalidGameError("P 含有非有限元素")
        n = P.shape[0]
        if np.any(np.diag(P) != 0):
            bad = [i for i in range(n) if P[i, i] != 0]
            raise SelfLoopForbidden(f"网络不允许自环，P 对角线非零的玩家: {bad}")
        if not allow_any_weights and (np.any(P < 0) or np.any(P > 1)):
            raise WeightOutOfRange("P 的元素必须在 [0, 1] 内（可用 allow_any_weights 放宽）")

        a = float(a)
        if not math.isfinite(a):
            raise InvalidGameError(f"耦合系数 a 必须有限: {a}")

        if action_set is None or isinstance(action_set, FullSpace):
            action_set = Box.unbounded(n)
        if not isinstance(action_set, Box):
            raise UnsupportedActionSet(f"行动集合必须是 Box，实际为 {action_set.kind}")
        if action_set.dim != n:
            raise InvalidGameError(f"行动集合维度 {action_set.dim} 与玩家数 {n} 不一致")

        if intervention_set is None:
            intervention_set = FullSpace(n)
        if intervention_set.dim != n:
            raise InvalidGameError(f"干预集合维度 {intervention_set.dim} 与玩家数 {n} 不一致")
        if not intervention_set.contains_origin():
            raise InterventionSetExcludesOrigin("干预集合必须包含原点")

        P.setflags(write=False)
        self.P = P
        self.a = a
        self.b = as_vector(b, n, 'b').copy()
        self.b.setflags(write=False)
        self.action_set = action_set
        self.intervention_set = intervention_set
        self.allow_any_weights = allow_any_weights

        identity = np.eye(n)
        self.aP = a * P
        self.F_matrix = identity - self.aP
        self.H_matrix = identity - a * (P + P.T)
        for arr in (self.aP, self.F_matrix, self.H_matrix):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def is_symmetric(self) -> bool:
        return bool(np.all(np.abs(self.P - self.P.T) <= SYMMETRY_TOL))

    def with_sets(self, action_set: Optional[ConstraintSet] = None,
                  intervention_set: Optional[ConstraintSet] = None) -> 'NetworkGame':
        """返回替换了行动集合或干预集合的新博弈"""
        return NetworkGame(
            self.P, self.a, self.b,
            action_set=action_set if action_set is not None else self.action_set,
            intervention_set=intervention_set if intervention_set is not None else self.intervention_set,
            allow_any_weights=self.allow_any_weights,
        )

    def _x(self, x) -> np.ndarray:
        return as_vector(x, self.n, 'x')

    def neighbor_aggregate(self, x) -> np.ndarray:
        """z_i = Σ_j P_ij x_j"""
        return self.P @ self._x(x)

    def _check_player(self, i: int):
        if not 0 <= i < self.n:
            raise IndexError(f"玩家索引 {i} 超出范围 [0, {self.n})")

    def payoff(self, i: int, x, u_i: float = 0.0) -> float:
        """玩家 i 的收益 -½x_i² + x_i(a·z_i + b_i) + x_i·u_i"""
        self._check_player(i)
        x = self._x(x)
        z_i = float(self.P[i] @ x)
        return -0.5 * x[i] ** 2 + x[i] * (self.a * z_i + self.b[i]) + x[i] * u_i

    def player_gradient(self, i: int, x, u_i: float = 0.0) -> float:
        """∂U_i/∂x_i = -x_i + a·z_i + b_i + u_i"""
        self._check_player(i)
        x = self._x(x)
        return -x[i] + self.a * float(self.P[i] @ x) + self.b[i] + u_i

    def welfare(self, x) -> float:
        """社会福利 -½xᵀx + a·xᵀPx + bᵀx（u ≡ 0）"""
        x = self._x(x)
        return float(-0.5 * x @ x + self.a * x @ (self.P @ x) + self.b @ x)

    def game_map(self, x) -> np.ndarray:
        """博弈映射 F(x) = (I - aP)x - b"""
        return self.F_matrix @ self._x(x) - self.b

    def welfare_map(self, x) -> np.ndarray:
        """福利映射 H(x) = (I - a(P + Pᵀ))x - b，即 -∇welfare"""
        return self.H_matrix @ self._x(x) - self.b

    def pseudo_gradient(self, x, u) -> np.ndarray:
        """闭环伪梯度漂移 -F(x) + u"""
        return -self.game_map(x) + as_vector(u, self.n, 'u')

    def check_assumptions(self) -> AssumptionReport:
        """检查谱条件：1 - a·λ_i(P + Pᵀ) > 0 对所有 i 成立

        a > 0 时只需看最大特征值，a < 0 时只需看最小特征值。
        """
        eigenvalues = linalg.eigvalsh(self.P + self.P.T)
        lam_min, lam_max = float(eigenvalues[0]), float(eigenvalues[-1])
        if self.a > 0:
            margin = 1.0 - self.a * lam_max
        elif self.a < 0:
            margin = 1.0 - self.a * lam_min
        else:
            margin = 1.0
        norm_aP = spectral_norm(self.aP)
        return AssumptionReport(
            assumption1_ok=bool(self.intervention_set.contains_origin()),
            symmetric=self.is_symmetric,
            lambda_min_PPt=lam_min,
            lambda_max_PPt=lam_max,
            margin=margin,
            aP_spectral_norm=norm_aP,
            assumption2_ok=margin > 0,
            weak_coupling_ok=norm_aP < WEAK_COUPLING_BOUND,
            decoupled=self.a == 0.0,
        )

    def to_dict(self) -> dict:
        return {
            'n': self.n,
            'P': self.P.tolist(),
            'a': self.a,
            'b': self.b.tolist(),
            'action_set': self.action_set.to_dict(),
            'intervention_set': self.intervention_set.to_dict(),
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, NetworkGame):
            return NotImplemented
        return (np.array_equal(self.P, other.P) and self.a == other.a
                and np.array_equal(self.b, other.b)
                and self.action_set.to_dict() == other.action_set.to_dict()
                and self.intervention_set.to_dict() == other.intervention_set.to_dict()
                and self.allow_any_weights == other.allow_any_weights)

    __hash__ = None

    def __repr__(self) -> str:
        return f"NetworkGame(n={self.n}, a={self.a})"
