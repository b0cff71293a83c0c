"""配置模块 - 读取 config.json 并与默认值合并"""

import copy
import json
from pathlib import Path
from typing import Optional, Union

DEFAULT_CONFIG = {
    'solver': {
        'tol': 1e-10,
        'max_iters': 1_000_000,
    },
    'sim': {
        'h': 1e-3,
        't_max': 100.0,
        'conv_tol': 1e-6,
        'record_stride': 10,
        'lyapunov_slack': 1e-6,
        'bound_ceiling': 1e6,
    },
    'sweep': {
        'workers': 2,
        'seeds': [0, 1, 2],
    },
}


def load_config(config_path: Optional[Union[str, Path]] = None) -> dict:
    """加载配置文件

    未指定路径时读取项目根目录下的 config.json，文件不存在则使用默认配置；
    显式指定的路径不存在时报错。

    Args:
        config_path: 配置文件路径

    Returns:
        dict: 合并后的配置
    """
    explicit = config_path is not None
    if config_path is None:
        config_path = Path(__file__).parent.parent / 'config.json'
    config_path = Path(config_path)

    config = copy.deepcopy(DEFAULT_CONFIG)
    if not config_path.exists():
        if explicit:
            raise FileNotFoundError(f"配置文件不存在: {config_path}")
        return config

    with open(config_path, 'r', encoding='utf-8') as f:
        user_config = json.load(f)

    for section, values in user_config.items():
        if isinstance(values, dict) and isinstance(config.get(section), dict):
            config[section].update(values)
        else:
            config[section] = values
    return config
