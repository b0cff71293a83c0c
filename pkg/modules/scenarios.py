"""场景模块 - Cournot 市场映射、按谱条件标定的随机网络、场景文件读写"""

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from scipy import linalg

from .equilibria import AnalysisReport
from .errors import DegenerateNetwork, InvalidGameError, ScenarioFormatError
from .game import NetworkGame
from .protocols import ProtocolKind, ProtocolOptions
from .sets import ConstraintSet, set_from_dict
from .sim import ConvergenceMetrics, SimConfig, Trajectory, summarize

logger = logging.getLogger(__name__)

MAX_DEGENERATE_DRAWS = 100
_RANDOM_B_RANGE = (-1.0, 2.0)


@dataclass
class CournotParams:
    """Cournot 寡头市场参数

    反需求函数 p_i(x) = α_i - ½(x_i + 2β·Σ_j P_ij x_j)，映射为 a = -β，b = α - d。
    """

    alpha: np.ndarray
    d: np.ndarray
    beta: float
    P: np.ndarray
    action_set: Optional[ConstraintSet] = None
    intervention_set: Optional[ConstraintSet] = None

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.d = np.asarray(self.d, dtype=float)
        self.P = np.asarray(self.P, dtype=float)
        self.beta = float(self.beta)
        n = self.P.shape[0] if self.P.ndim == 2 else -1
        if self.alpha.shape != (n,) or self.d.shape != (n,):
            raise InvalidGameError(f"alpha 与 d 必须是长度 {n} 的向量")
        if not np.all(self.alpha > 0):
            raise InvalidGameError("最高支付意愿 alpha 必须全部为正")
        if not np.all(self.d > 0):
            raise InvalidGameError("边际成本 d 必须全部为正")
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise InvalidGameError(f"替代程度 beta 必须为正有限数: {self.beta}")

    @property
    def n(self) -> int:
        return len(self.alpha)

    def prices(self, x) -> np.ndarray:
        """反需求价格 p(x)"""
        x = np.asarray(x, dtype=float)
        return self.alpha - 0.5 * (x + 2 * self.beta * (self.P @ x))

    def profit(self, i: int, x, u_i: float = 0.0) -> float:
        """企业 i 的利润 x_i·p_i - x_i·d_i + x_i·u_i"""
        x = np.asarray(x, dtype=float)
        return float(x[i] * self.prices(x)[i] - x[i] * self.d[i] + x[i] * u_i)

    def to_dict(self) -> dict:
        return {'alpha': self.alpha.tolist(), 'd': self.d.tolist(), 'beta': self.beta}


def cournot_to_game(params: CournotParams) -> NetworkGame:
    """Cournot 市场对应的网络博弈：a = -β，b = α - d"""
    return NetworkGame(
        params.P, -params.beta, params.alpha - params.d,
        action_set=params.action_set,
        intervention_set=params.intervention_set,
    )


def _draw_network(rng: np.random.Generator, n: int, density: float, symmetric: bool) -> np.ndarray:
    mask = rng.random((n, n)) < density
    # 1 - U[0, 1) 落在 (0, 1]
    weights = 1.0 - rng.random((n, n))
    P = np.where(mask, weights, 0.0)
    if symmetric:
        upper = np.triu(P, k=1)
        P = upper + upper.T
    np.fill_diagonal(P, 0.0)
    return P


def random_game(n: int, density: float, a_sign: int, margin: float, seed: int, *,
                symmetric: bool = False,
                action_set: Optional[ConstraintSet] = None,
                intervention_set: Optional[ConstraintSet] = None) -> NetworkGame:
    """生成满足谱条件且余量恰为 margin 的随机网络博弈

    a 按 1 - a·λ_ext(P + Pᵀ) = margin 标定：a > 0 时 λ_ext 取最大特征值，a < 0 时取最小特征值。
    b 在 [-1, 2) 上均匀抽取。相同 seed 给出完全相同的博弈。

    Args:
        n: 玩家数（≥ 2）
        density: 非对角元素非零的概率
        a_sign: a 的符号（+1 或 -1）
        margin: 谱条件余量，取值 (0, 1)
        seed: 随机种子
        symmetric: 是否生成对称网络
        action_set: 行动集合
        intervention_set: 干预集合

    Returns:
        NetworkGame: 随机博弈
    """
    if n < 2:
        raise ValueError(f"玩家数必须至少为 2: {n}")
    if not 0.0 <= density <= 1.0:
        raise ValueError(f"密度必须在 [0, 1] 内: {density}")
    if a_sign not in (1, -1):
        raise ValueError(f"a_sign 必须是 +1 或 -1: {a_sign}")
    if not 0.0 < margin < 1.0:
        raise ValueError(f"margin 必须在 (0, 1) 内: {margin}")

    rng = np.random.default_rng(seed)
    for attempt in range(MAX_DEGENERATE_DRAWS):
        P = _draw_network(rng, n, density, symmetric)
        if np.any(P):
            break
        logger.debug("第 %d 次抽样得到零网络，重新抽样", attempt + 1)
    else:
        raise DegenerateNetwork(f"{MAX_DEGENERATE_DRAWS} 次抽样均为零网络 (n={n}, density={density})")

    b = rng.uniform(*_RANDOM_B_RANGE, size=n)
    eigenvalues = linalg.eigvalsh(P + P.T)
    # 非负零对角矩阵：λ_max > 0，λ_min < 0
    lam_ext = eigenvalues[-1] if a_sign > 0 else eigenvalues[0]
    a = (1.0 - margin) / lam_ext
    return NetworkGame(P, a, b, action_set=action_set, intervention_set=intervention_set)


def random_initial_state(game: NetworkGame, seed: int) -> np.ndarray:
    """按种子抽取初始行动：正态分布乘以 max(1, ‖b‖∞)，再投影到行动集合"""
    rng = np.random.default_rng(seed)
    scale = max(1.0, float(np.max(np.abs(game.b))))
    return game.action_set.project(rng.standard_normal(game.n) * scale)


def _vectors_equal(left: Optional[np.ndarray], right: Optional[np.ndarray]) -> bool:
    if left is None or right is None:
        return left is None and right is None
    return np.array_equal(left, right)


@dataclass(eq=False)
class ScenarioSpec:
    """场景：博弈、协议及其选项、仿真参数、初始点与标签"""

    game: NetworkGame
    protocol: ProtocolKind = ProtocolKind.OPEN_LOOP
    sim: SimConfig = field(default_factory=SimConfig)
    x0: Optional[np.ndarray] = None
    label: str = ''
    x_s: Optional[np.ndarray] = None
    verify_target: bool = True
    seed: Optional[int] = None
    cournot: Optional[CournotParams] = None
    expected: Optional[Dict[str, List[float]]] = None
    # 场景文件中显式给出的仿真参数，用于与配置文件分层合并
    sim_block: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        n = self.game.n
        self.protocol = ProtocolKind.parse(self.protocol)
        self.x0 = np.zeros(n) if self.x0 is None else np.asarray(self.x0, dtype=float)
        if self.x0.shape != (n,):
            raise ScenarioFormatError(f"x0 的长度必须为 {n}", field='x0')
        if self.x_s is not None:
            self.x_s = np.asarray(self.x_s, dtype=float)
            if self.x_s.shape != (n,):
                raise ScenarioFormatError(f"x_s 的长度必须为 {n}", field='x_s')
        if self.cournot is not None and self.cournot.n != n:
            raise ScenarioFormatError("cournot 参数维度与博弈不一致", field='cournot')

    def protocol_options(self, **overrides) -> ProtocolOptions:
        values = {'x_s': self.x_s, 'verify_target': self.verify_target, 'x0': self.x0}
        values.update(overrides)
        return ProtocolOptions(**values)

    def to_dict(self) -> dict:
        game = self.game
        data: Dict[str, Any] = {'label': self.label, 'n': game.n, 'P': game.P.tolist()}
        if self.cournot is not None:
            data['cournot'] = self.cournot.to_dict()
        else:
            data['a'] = game.a
            data['b'] = game.b.tolist()
        data['action_set'] = game.action_set.to_dict()
        data['intervention_set'] = game.intervention_set.to_dict()
        if game.allow_any_weights:
            data['allow_any_weights'] = True
        data['protocol'] = self.protocol.value
        if self.x_s is not None:
            data['x_s'] = self.x_s.tolist()
        if not self.verify_target:
            data['verify_target'] = False
        data['x0'] = self.x0.tolist()
        data['sim'] = self.sim.to_dict()
        if self.seed is not None:
            data['seed'] = self.seed
        if self.expected is not None:
            data['expected'] = self.expected
        return data

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScenarioSpec):
            return NotImplemented
        return (self.game == other.game
                and self.protocol is other.protocol
                and self.sim == other.sim
                and np.array_equal(self.x0, other.x0)
                and self.label == other.label
                and _vectors_equal(self.x_s, other.x_s)
                and self.verify_target == other.verify_target
                and self.seed == other.seed
                and self.expected == other.expected)

    __hash__ = None


def _require(data: dict, key: str):
    if key not in data:
        raise ScenarioFormatError("缺少必需字段", field=key)
    return data[key]


def _float_vector(value, n: int, key: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) != n:
        raise ScenarioFormatError(f"必须是长度 {n} 的数字列表", field=key)
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
        raise ScenarioFormatError("列表元素必须是数字", field=key)
    return np.array(value, dtype=float)


def _parse_matrix(value, n: int) -> np.ndarray:
    if not isinstance(value, list) or len(value) != n:
        raise ScenarioFormatError(f"P 必须是 {n} 行的矩阵", field='P')
    rows = [_float_vector(row, n, f'P[{i}]') for i, row in enumerate(value)]
    return np.array(rows)


def _parse_set(data: dict, key: str, n: int) -> Optional[ConstraintSet]:
    record = data.get(key)
    if record is None:
        return None
    if not isinstance(record, dict):
        raise ScenarioFormatError("集合记录必须是对象", field=key)
    return set_from_dict(record, n)


def scenario_from_dict(data: dict, default_label: str = '') -> ScenarioSpec:
    """从解析后的 JSON 对象构造场景，重新校验全部不变量"""
    if not isinstance(data, dict):
        raise ScenarioFormatError("场景文件顶层必须是对象")

    n = _require(data, 'n')
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ScenarioFormatError("n 必须是正整数", field='n')
    P = _parse_matrix(_require(data, 'P'), n)
    action_set = _parse_set(data, 'action_set', n)
    intervention_set = _parse_set(data, 'intervention_set', n)
    allow_any_weights = bool(data.get('allow_any_weights', False))

    cournot = None
    if 'cournot' in data:
        block = data['cournot']
        if not isinstance(block, dict):
            raise ScenarioFormatError("cournot 必须是对象", field='cournot')
        if 'a' in data or 'b' in data:
            raise ScenarioFormatError("给出 cournot 时不能再给出 a 或 b", field='cournot')
        beta = _require(block, 'beta')
        if isinstance(beta, bool) or not isinstance(beta, (int, float)):
            raise ScenarioFormatError("beta 必须是数字", field='cournot.beta')
        cournot = CournotParams(
            alpha=_float_vector(_require(block, 'alpha'), n, 'cournot.alpha'),
            d=_float_vector(_require(block, 'd'), n, 'cournot.d'),
            beta=beta, P=P,
            action_set=action_set, intervention_set=intervention_set,
        )
        game = cournot_to_game(cournot)
    else:
        a = _require(data, 'a')
        if isinstance(a, bool) or not isinstance(a, (int, float)):
            raise ScenarioFormatError("a 必须是数字", field='a')
        b = _float_vector(_require(data, 'b'), n, 'b')
        game = NetworkGame(P, a, b, action_set=action_set, intervention_set=intervention_set,
                           allow_any_weights=allow_any_weights)

    try:
        protocol = ProtocolKind.parse(data.get('protocol', ProtocolKind.OPEN_LOOP.value))
    except ValueError as e:
        raise ScenarioFormatError(str(e), field='protocol') from None

    sim_block = data.get('sim', {})
    if not isinstance(sim_block, dict):
        raise ScenarioFormatError("sim 必须是对象", field='sim')
    try:
        sim = SimConfig.from_dict(sim_block)
    except (TypeError, ValueError) as e:
        raise ScenarioFormatError(str(e), field='sim') from None

    x0 = _float_vector(data['x0'], n, 'x0') if 'x0' in data else None
    x_s = _float_vector(data['x_s'], n, 'x_s') if data.get('x_s') is not None else None

    seed = data.get('seed')
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise ScenarioFormatError("seed 必须是整数", field='seed')

    expected = data.get('expected')
    if expected is not None:
        if not isinstance(expected, dict):
            raise ScenarioFormatError("expected 必须是对象", field='expected')
        expected = {key: _float_vector(value, n, f'expected.{key}').tolist()
                    for key, value in expected.items()}

    label = data.get('label', default_label)
    if not isinstance(label, str):
        raise ScenarioFormatError("label 必须是字符串", field='label')

    return ScenarioSpec(
        game=game, protocol=protocol, sim=sim, x0=x0, label=label,
        x_s=x_s, verify_target=bool(data.get('verify_target', True)),
        seed=seed, cournot=cournot, expected=expected, sim_block=dict(sim_block),
    )


def load_scenario(path: Union[str, Path]) -> ScenarioSpec:
    """读取场景 JSON 文件

    语法错误带行列号，字段错误带字段路径；构造约束（自环、权重越界等）以具名错误抛出。
    """
    path = Path(path)
    with open(path, 'r', encoding='utf-8') as f:
        text = f.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioFormatError(f"JSON 语法错误: {e.msg}", line=e.lineno, column=e.colno) from None
    spec = scenario_from_dict(data, default_label=path.stem)
    logger.info("已加载场景 %s (n=%d, protocol=%s)", path, spec.game.n, spec.protocol.value)
    return spec


def write_json(path: Union[str, Path], data: dict):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, ensure_ascii=False, indent=2)
        f.write('\n')


def save_scenario(spec: ScenarioSpec, path: Union[str, Path]):
    write_json(path, spec.to_dict())


def save_results(traj: Optional[Trajectory], report: Optional[AnalysisReport],
                 out_dir: Union[str, Path], metrics: Optional[ConvergenceMetrics] = None) -> List[str]:
    """写出仿真与分析产物

    轨迹写入 trajectory.csv，收敛指标写入 summary.json，分析报告写入 analysis.json。

    Returns:
        List[str]: 已写出的文件路径
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if traj is not None:
        csv_path = os.path.join(out_dir, 'trajectory.csv')
        traj.write_csv(csv_path)
        written.append(csv_path)
        if metrics is not None:
            summary_path = os.path.join(out_dir, 'summary.json')
            write_json(summary_path, summarize(traj, metrics))
            written.append(summary_path)
    if report is not None:
        analysis_path = os.path.join(out_dir, 'analysis.json')
        write_json(analysis_path, report.to_dict())
        written.append(analysis_path)
    return written
