"""均衡求解模块 - 仿射变分不等式求解、纳什均衡、社会最优与开环干预可行性"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy import linalg

from .errors import AssumptionViolated, MaxItersExceeded, NonMonotoneProblem, NotInSet
from .game import AssumptionReport, NetworkGame
from .sets import MEMBERSHIP_TOL, Box, ConstraintSet, as_vector

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 1_000_000
FEASIBILITY_TOL = 1e-9


def _vector_or_none(value: Optional[np.ndarray]):
    return None if value is None else [float(v) for v in value]


class AffineVi:
    """仿射变分不等式：求 x̄ ∈ 集合，使 (y - x̄)ᵀ(Ax̄ - c) ≥ 0 对集合内所有 y 成立"""

    def __init__(self, A, c, constraint_set: ConstraintSet):
        A = np.asarray(A, dtype=float)
        n = constraint_set.dim
        if A.shape != (n, n):
            raise ValueError(f"A 的形状 {A.shape} 与集合维度 {n} 不一致")
        self.A = A
        self.c = as_vector(c, n, 'c')
        self.constraint_set = constraint_set
        # 仿射映射的强单调常数恰为对称部分的最小特征值
        self.mu = float(linalg.eigvalsh(0.5 * (A + A.T))[0])
        self.L = float(np.linalg.norm(A, 2))

    def mapping(self, x) -> np.ndarray:
        return self.A @ x - self.c

    def residual(self, x) -> float:
        """自然残差 ‖x - proj(x - (Ax - c))‖，为零当且仅当 x 是解"""
        x = np.asarray(x, dtype=float)
        return float(np.linalg.norm(x - self.constraint_set.project(x - self.mapping(x))))

    def solve(self, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS,
              x0=None) -> np.ndarray:
        """投影法求解

        迭代 x ← proj(x - γ(Ax - c))，步长 γ = μ/L²；当 ‖x_{k+1} - x_k‖/γ ≤ tol
        且自然残差不超过 10·tol 时停止。无约束问题直接解线性方程组。

        Args:
            tol: 停止容差
            max_iters: 最大迭代次数
            x0: 初始点（默认原点的投影）

        Returns:
            np.ndarray: 近似解
        """
        if self.mu <= 0:
            raise NonMonotoneProblem(f"映射不是强单调的: μ = {self.mu:.6g}")

        if self.constraint_set.is_full:
            return linalg.solve(self.A, self.c)

        project = self.constraint_set.project
        gamma = self.mu / self.L ** 2
        x = project(np.zeros(self.constraint_set.dim) if x0 is None else x0)
        for k in range(max_iters):
            x_next = project(x - gamma * (self.A @ x - self.c))
            step = np.linalg.norm(x_next - x) / gamma
            x = x_next
            if step <= tol and self.residual(x) <= 10 * tol:
                logger.debug("投影法在第 %d 步收敛 (γ=%.3g)", k + 1, gamma)
                return x
        residual = self.residual(x)
        raise MaxItersExceeded(
            f"投影法 {max_iters} 步内未收敛，当前残差 {residual:.3e}",
            residual=residual, iterations=max_iters,
        )


def solve_affine_vi(problem: AffineVi, tol: float = DEFAULT_TOL,
                    max_iters: int = DEFAULT_MAX_ITERS) -> np.ndarray:
    return problem.solve(tol=tol, max_iters=max_iters)


def nash_equilibrium(game: NetworkGame, tol: float = DEFAULT_TOL,
                     max_iters: int = DEFAULT_MAX_ITERS) -> np.ndarray:
    """纳什均衡 x_NE ∈ sol(𝒳, F)"""
    problem = AffineVi(game.F_matrix, game.b, game.action_set)
    return problem.solve(tol=tol, max_iters=max_iters)


def social_optimum(game: NetworkGame, tol: float = DEFAULT_TOL,
                   max_iters: int = DEFAULT_MAX_ITERS,
                   report: Optional[AssumptionReport] = None) -> np.ndarray:
    """社会最优 x_opt ∈ sol(𝒳, H)

    谱条件不成立时福利不是严格凹的，拒绝求解。
    """
    report = report or game.check_assumptions()
    if not report.assumption2_ok:
        raise AssumptionViolated(f"谱条件不成立 (margin = {report.margin:.6g})，社会最优不唯一")
    problem = AffineVi(game.H_matrix, game.b, game.action_set)
    return problem.solve(tol=tol, max_iters=max_iters)


@dataclass
class FeasibilityVerdict:
    """开环干预 u_opt 的可行性判定

    u_opt = F(x_opt) + v，其中 v 属于 x_opt 处的法锥。
    """

    feasible: bool
    u_opt: Optional[np.ndarray]
    normal_component: Optional[np.ndarray]
    residual: float

    def to_dict(self) -> dict:
        return {
            'feasible': self.feasible,
            'u_opt': _vector_or_none(self.u_opt),
            'normal_component': _vector_or_none(self.normal_component),
            'residual': self.residual,
        }


def admissible_intervals(game: NetworkGame, x_opt) -> tuple:
    """逐坐标给出使 x_opt 成为 sol(𝒳, F - u) 的 u 区间

    内点处 u_i = F_i(x_opt)；下界活跃时 u_i ≤ F_i；上界活跃时 u_i ≥ F_i；两端同时活跃时 u_i 任意。

    Returns:
        tuple: (下端数组, 上端数组, F(x_opt))
    """
    x = as_vector(x_opt, game.n, 'x_opt')
    f = game.game_map(x)
    lower, upper = game.action_set.active_bounds(x)
    lo = f.copy()
    hi = f.copy()
    lo[lower] = -np.inf
    hi[upper] = np.inf
    return lo, hi, f


def optimal_intervention(game: NetworkGame, x_opt, tol: float = FEASIBILITY_TOL) -> FeasibilityVerdict:
    """计算开环干预 u_opt 并判定其是否属于干预集合

    行动集合是 Box，法锥按坐标分解，可行的 u 构成区间乘积。取其中范数最小的元素。

    对 Ball 干预集合，范数最小元同时最小化欧氏范数，而球以原点为中心，
    因此乘积集合与球相交当且仅当该范数最小元在球内；子空间与全空间同理逐坐标成立。
    """
    x = as_vector(x_opt, game.n, 'x_opt')
    if not game.action_set.contains(x, MEMBERSHIP_TOL):
        raise NotInSet("x_opt 不在行动集合内")
    lo_u, hi_u, f = admissible_intervals(game, x)
    u_set = game.intervention_set

    if isinstance(u_set, Box):
        lo = np.maximum(lo_u, u_set.lo)
        hi = np.minimum(hi_u, u_set.hi)
        gap = np.maximum(lo - hi, 0.0)
        residual = float(np.linalg.norm(gap))
        feasible = bool(np.all(gap <= tol))
        candidate = u_set.project(np.clip(0.0, lo, hi))
    else:
        cone_min = np.clip(0.0, lo_u, hi_u)
        residual = u_set.distance(cone_min)
        feasible = residual <= tol
        candidate = u_set.project(cone_min)

    if not feasible:
        return FeasibilityVerdict(False, None, None, residual)

    problem = AffineVi(game.F_matrix, game.b + candidate, game.action_set)
    return FeasibilityVerdict(
        feasible=True,
        u_opt=candidate,
        normal_component=candidate - f,
        residual=problem.residual(x),
    )


def welfare_gap(game: NetworkGame, x_ne, x_opt) -> float:
    """效率损失 welfare(x_opt) - welfare(x_NE)"""
    return game.welfare(x_opt) - game.welfare(x_ne)


@dataclass
class AnalysisReport:
    """博弈分析结果：谱条件、x_NE、x_opt、u_opt 判定与福利差"""

    assumptions: AssumptionReport
    x_ne: Optional[np.ndarray] = None
    x_opt: Optional[np.ndarray] = None
    verdict: Optional[FeasibilityVerdict] = None
    welfare_gap: Optional[float] = None
    residuals: Dict[str, float] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.verdict is not None and self.verdict.feasible

    def to_dict(self) -> dict:
        verdict = self.verdict
        return {
            'x_ne': _vector_or_none(self.x_ne),
            'x_opt': _vector_or_none(self.x_opt),
            'u_opt': _vector_or_none(verdict.u_opt) if verdict else None,
            'normal_component': _vector_or_none(verdict.normal_component) if verdict else None,
            'feasible': self.feasible,
            'margin': self.assumptions.margin,
            'welfare_gap': self.welfare_gap,
            'residuals': dict(self.residuals),
            'assumptions': self.assumptions.to_dict(),
        }


def analyze_game(game: NetworkGame, tol: float = DEFAULT_TOL,
                 max_iters: int = DEFAULT_MAX_ITERS) -> AnalysisReport:
    """依次检查谱条件、求解 x_NE 与 x_opt、判定 u_opt 可行性

    谱条件不成立时仍返回报告，x_opt 及其后各项为空。
    """
    report = AnalysisReport(assumptions=game.check_assumptions())

    try:
        report.x_ne = nash_equilibrium(game, tol=tol, max_iters=max_iters)
        report.residuals['x_ne'] = AffineVi(game.F_matrix, game.b, game.action_set).residual(report.x_ne)
    except NonMonotoneProblem as e:
        logger.warning("纳什均衡无法求解: %s", e)

    if not report.assumptions.assumption2_ok:
        return report

    report.x_opt = social_optimum(game, tol=tol, max_iters=max_iters, report=report.assumptions)
    report.residuals['x_opt'] = AffineVi(game.H_matrix, game.b, game.action_set).residual(report.x_opt)
    report.verdict = optimal_intervention(game, report.x_opt)
    report.residuals['u_opt'] = report.verdict.residual
    if report.x_ne is not None:
        report.welfare_gap = welfare_gap(game, report.x_ne, report.x_opt)
    return report
