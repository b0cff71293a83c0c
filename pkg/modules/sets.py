"""约束集合模块 - 凸集合上的欧氏投影、切锥投影与 Moreau 分解

支持四种集合：区间乘积 Box、以原点为中心的球 Ball、坐标子空间 Subspace、全空间 FullSpace。
所有集合构造后不可变，方法均为纯函数。
"""

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, List, Sequence, Tuple, Union

import numpy as np

from .errors import DimensionMismatch, InvalidSetError, NotInSet

# 成员判定容差（欧氏距离）
MEMBERSHIP_TOL = 1e-9
# 活跃边界判定容差
ACTIVE_TOL = 1e-9
# 顶点枚举的维度上限
MAX_VERTEX_DIM = 16


def as_vector(z, dim: int, name: str = 'z') -> np.ndarray:
    """将输入转换为一维浮点向量并检查维度"""
    arr = np.asarray(z, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape != (dim,):
        raise DimensionMismatch(f"{name} 的维度为 {arr.shape}，期望 ({dim},)")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def encode_bound(value: float) -> Union[float, str]:
    """无穷端点编码为字符串 "inf" / "-inf"，便于写入 JSON"""
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return float(value)


def decode_bound(value) -> float:
    """解码区间端点，接受数字与 "inf" / "-inf" 字符串"""
    if isinstance(value, str):
        if value in ('inf', '+inf'):
            return math.inf
        if value == '-inf':
            return -math.inf
        raise InvalidSetError(f"无法识别的区间端点: {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidSetError(f"区间端点必须是数字或 \"inf\"/\"-inf\": {value!r}")
    return float(value)


@dataclass(frozen=True)
class ScalarInterval:
    """闭区间 [lo, hi]，端点允许取无穷"""

    lo: float
    hi: float

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise InvalidSetError("区间端点不能为 NaN")
        if self.lo > self.hi:
            raise InvalidSetError(f"区间下界 {self.lo} 大于上界 {self.hi}")
        if self.lo == math.inf or self.hi == -math.inf:
            raise InvalidSetError(f"区间 [{self.lo}, {self.hi}] 不含有限点")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi


class ConstraintSet:
    """非空闭凸集合的基类"""

    kind = ''

    def __init__(self, dim: int):
        if dim < 1:
            raise InvalidSetError(f"集合维度必须为正: {dim}")
        self._dim = int(dim)

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def is_full(self) -> bool:
        """集合是否等于整个空间"""
        return False

    def _vector(self, z, name: str = 'z') -> np.ndarray:
        return as_vector(z, self._dim, name)

    def project(self, z) -> np.ndarray:
        """欧氏投影 proj(z)"""
        raise NotImplementedError

    def _tangent(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def distance(self, z) -> float:
        z = self._vector(z)
        return float(np.linalg.norm(z - self.project(z)))

    def contains(self, z, tol: float = 0.0) -> bool:
        """判断 z 到集合的距离是否不超过 tol"""
        return self.distance(z) <= tol

    def contains_origin(self) -> bool:
        return self.contains(np.zeros(self._dim))

    def _require_member(self, x: np.ndarray):
        dist = self.distance(x)
        if dist > MEMBERSHIP_TOL:
            raise NotInSet(f"点不在{self.kind}集合内，距离 {dist:.3e} 超过容差 {MEMBERSHIP_TOL}")

    def project_tangent(self, x, v) -> np.ndarray:
        """将 v 投影到 x 处的切锥 𝒯(x)

        Args:
            x: 集合内的点
            v: 待投影方向

        Returns:
            np.ndarray: 切锥投影 Π(x, v)
        """
        x = self._vector(x, 'x')
        v = self._vector(v, 'v')
        self._require_member(x)
        return self._tangent(x, v)

    def decompose_moreau(self, x, z) -> Tuple[np.ndarray, np.ndarray]:
        """Moreau 分解 z = 切锥分量 + 法锥分量，两者正交"""
        z = self._vector(z)
        tangent = self.project_tangent(x, z)
        return tangent, z - tangent

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.to_dict()})"


class Box(ConstraintSet):
    """区间乘积 ∏[lo_i, hi_i]"""

    kind = 'box'

    def __init__(self, intervals: Sequence[Union[ScalarInterval, Sequence[float]]]):
        parsed = []
        for item in intervals:
            if isinstance(item, ScalarInterval):
                parsed.append(item)
            else:
                lo, hi = item
                parsed.append(ScalarInterval(float(lo), float(hi)))
        super().__init__(len(parsed))
        self._intervals = tuple(parsed)
        self.lo = _frozen([iv.lo for iv in parsed])
        self.hi = _frozen([iv.hi for iv in parsed])
        # 宽度小于 2·ACTIVE_TOL 的区间视为两端同时活跃
        self._pinched = self.hi - self.lo < 2 * ACTIVE_TOL
        self._pinched.setflags(write=False)

    @classmethod
    def uniform(cls, dim: int, lo: float, hi: float) -> 'Box':
        return cls([(lo, hi)] * dim)

    @classmethod
    def unbounded(cls, dim: int) -> 'Box':
        return cls.uniform(dim, -math.inf, math.inf)

    @property
    def intervals(self) -> Tuple[ScalarInterval, ...]:
        return self._intervals

    @property
    def is_full(self) -> bool:
        return bool(np.all(np.isneginf(self.lo)) and np.all(np.isposinf(self.hi)))

    @property
    def is_bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi)))

    def project(self, z) -> np.ndarray:
        return np.clip(self._vector(z), self.lo, self.hi)

    def active_bounds(self, x) -> Tuple[np.ndarray, np.ndarray]:
        """返回 (下界活跃, 上界活跃) 两个布尔数组"""
        x = self._vector(x, 'x')
        lower = (x - self.lo <= ACTIVE_TOL) | self._pinched
        upper = (self.hi - x <= ACTIVE_TOL) | self._pinched
        return lower, upper

    def _tangent(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        lower, upper = self.active_bounds(x)
        out = v.copy()
        out[lower & (v < 0)] = 0.0
        out[upper & (v > 0)] = 0.0
        return out

    def vertices(self) -> Iterator[np.ndarray]:
        """枚举有界 Box 的全部顶点"""
        if not self.is_bounded:
            raise InvalidSetError("无界 Box 没有顶点")
        if self._dim > MAX_VERTEX_DIM:
            raise InvalidSetError(f"维度 {self._dim} 超过顶点枚举上限 {MAX_VERTEX_DIM}")
        for corner in itertools.product(*[(iv.lo, iv.hi) for iv in self._intervals]):
            yield np.array(corner)

    def to_dict(self) -> dict:
        return {
            'kind': 'box',
            'intervals': [[encode_bound(iv.lo), encode_bound(iv.hi)] for iv in self._intervals],
        }


class Ball(ConstraintSet):
    """以原点为中心、半径为 radius 的闭球"""

    kind = 'ball'

    def __init__(self, radius: float, dim: int):
        super().__init__(dim)
        radius = float(radius)
        if not (radius > 0 and math.isfinite(radius)):
            raise InvalidSetError(f"球半径必须为正有限数: {radius}")
        self.radius = radius

    def project(self, z) -> np.ndarray:
        z = self._vector(z)
        norm = np.linalg.norm(z)
        if norm > self.radius:
            return z * (self.radius / norm)
        return z.copy()

    def _tangent(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        norm = np.linalg.norm(x)
        if norm < self.radius - ACTIVE_TOL:
            return v.copy()
        unit = x / norm
        radial = float(v @ unit)
        # 边界上只去掉向外的径向分量
        if radial > 0:
            return v - radial * unit
        return v.copy()

    def to_dict(self) -> dict:
        return {'kind': 'ball', 'radius': self.radius}


class Subspace(ConstraintSet):
    """坐标子空间：free 以外的坐标固定为零（索引从 0 开始）"""

    kind = 'subspace'

    def __init__(self, free: Sequence[int], dim: int):
        super().__init__(dim)
        indices = sorted({int(i) for i in free})
        if any(i < 0 or i >= dim for i in indices):
            raise InvalidSetError(f"自由坐标索引越界: {indices}，维度 {dim}")
        self.free = tuple(indices)
        mask = np.zeros(dim)
        mask[list(indices)] = 1.0
        self.mask = _frozen(mask)

    @property
    def is_full(self) -> bool:
        return len(self.free) == self._dim

    @property
    def pinned(self) -> List[int]:
        return [i for i in range(self._dim) if i not in self.free]

    def project(self, z) -> np.ndarray:
        return self._vector(z) * self.mask

    def _tangent(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return v * self.mask

    def to_dict(self) -> dict:
        return {'kind': 'subspace', 'free': list(self.free)}


class FullSpace(ConstraintSet):
    """整个 ℝⁿ"""

    kind = 'full'

    @property
    def is_full(self) -> bool:
        return True

    def project(self, z) -> np.ndarray:
        return self._vector(z).copy()

    def _tangent(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return v.copy()

    def to_dict(self) -> dict:
        return {'kind': 'full', 'dim': self._dim}


def set_from_dict(data: dict, dim: int) -> ConstraintSet:
    """从场景文件中的标记记录构造集合

    Args:
        data: 形如 {"kind": "box", "intervals": [[lo, hi], ...]} 的字典
        dim: 期望维度（ball 与 subspace 记录本身不带维度）

    Returns:
        ConstraintSet: 对应的集合
    """
    if not isinstance(data, dict) or 'kind' not in data:
        raise InvalidSetError(f"集合记录缺少 kind 字段: {data!r}")
    kind = data['kind']
    if kind == 'box':
        intervals = data.get('intervals')
        if not isinstance(intervals, list):
            raise InvalidSetError("box 记录缺少 intervals 列表")
        parsed = []
        for pair in intervals:
            if not isinstance(pair, list) or len(pair) != 2:
                raise InvalidSetError(f"区间必须是 [lo, hi] 形式: {pair!r}")
            parsed.append(ScalarInterval(decode_bound(pair[0]), decode_bound(pair[1])))
        result = Box(parsed)
    elif kind == 'ball':
        result = Ball(data.get('radius', 0.0), dim)
    elif kind == 'subspace':
        result = Subspace(data.get('free', []), dim)
    elif kind == 'full':
        result = FullSpace(int(data.get('dim', dim)))
    else:
        raise InvalidSetError(f"未知的集合类型: {kind!r}")
    if result.dim != dim:
        raise DimensionMismatch(f"{kind} 集合维度 {result.dim} 与博弈维度 {dim} 不一致")
    return result
