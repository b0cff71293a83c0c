"""错误定义模块 - 网络博弈干预工具中所有具名异常"""

from typing import Optional


class NetworkGameError(Exception):
    """所有具名错误的基类"""


# ---- 约束集合 ----

class InvalidSetError(NetworkGameError):
    """约束集合参数非法（空区间、非正半径、越界索引等）"""


class DimensionMismatch(NetworkGameError):
    """向量维度与集合或博弈维度不一致"""


class NotInSet(NetworkGameError):
    """点不在集合内（超出成员容差）"""


# ---- 博弈构造 ----

class InvalidGameError(NetworkGameError):
    """网络博弈参数违反构造约束"""


class SelfLoopForbidden(InvalidGameError):
    """邻接矩阵对角线非零（网络不允许自环）"""


class WeightOutOfRange(InvalidGameError):
    """邻接矩阵元素超出 [0, 1]"""


class InterventionSetExcludesOrigin(InvalidGameError):
    """干预集合不包含原点"""


class UnsupportedActionSet(InvalidGameError):
    """行动集合不是 Box（或全空间）"""


# ---- 求解器 ----

class SolverError(NetworkGameError):
    """变分不等式求解失败"""


class NonMonotoneProblem(SolverError):
    """映射对称部分的最小特征值不为正"""


class MaxItersExceeded(SolverError):
    """迭代次数耗尽，附带当前残差"""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class AssumptionViolated(SolverError):
    """谱条件不成立，社会最优不唯一"""


# ---- 干预协议前提 ----

class ProtocolPreconditionError(NetworkGameError):
    """干预协议的前提条件不满足"""


class InterventionInfeasible(ProtocolPreconditionError):
    """不存在可行的开环干预 u_opt"""


class WeakCouplingViolated(ProtocolPreconditionError):
    """‖aP‖ ≥ 1/2 且干预集合不够大"""


class FeedbackPremiseViolated(ProtocolPreconditionError):
    """aPᵀx_opt 不属于干预集合"""


class TargetNotAssignable(ProtocolPreconditionError):
    """目标点 x_s 不是可指派均衡"""


class AsymmetricNetwork(ProtocolPreconditionError):
    """自适应干预要求 P 对称"""


class ConstrainedAdaptive(ProtocolPreconditionError):
    """自适应干预要求行动与干预均无约束"""


# ---- 仿真 ----

class MissingReference(NetworkGameError):
    """计算 Lyapunov 值所需的参考量缺失"""


class DivergenceError(NetworkGameError):
    """状态非有限或超过上限"""


# ---- 场景 ----

class ScenarioFormatError(NetworkGameError):
    """场景文件解析失败，附带字段路径或行列号"""

    def __init__(self, message: str, field: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        location = []
        if field:
            location.append(f"字段 {field}")
        if line is not None:
            location.append(f"第 {line} 行第 {column} 列")
        if location:
            message = f"{message}（{'，'.join(location)}）"
        super().__init__(message)
        self.field = field
        self.line = line
        self.column = column


class DegenerateNetwork(NetworkGameError):
    """随机网络多次抽样均为零矩阵"""
