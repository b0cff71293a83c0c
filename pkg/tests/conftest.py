"""测试公共夹具"""

import os
import sys

import numpy as np
import pytest

# 将项目根目录加入路径
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, ROOT)

from modules.game import NetworkGame  # noqa: E402

SCENARIO_DIR = os.path.join(ROOT, 'scenarios')

G2_P = [[0.0, 1.0], [1.0, 0.0]]


@pytest.fixture
def g2() -> NetworkGame:
    """两人对称博弈 G2：a = 0.25，b = (1, 1)，无约束"""
    return NetworkGame(G2_P, 0.25, [1.0, 1.0])


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


def scenario_path(name: str) -> str:
    return os.path.join(SCENARIO_DIR, name)
