"""配置测试：配置文件合并与仿真参数校验"""

import json

import pytest

from modules.config import DEFAULT_CONFIG, load_config
from modules.sim import SimConfig


def test_explicit_file_merged_over_defaults(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps({'sim': {'t_max': 5.0}, 'sweep': {'workers': 1}}), encoding='utf-8')
    config = load_config(path)
    assert config['sim']['t_max'] == 5.0
    assert config['sim']['h'] == DEFAULT_CONFIG['sim']['h']
    assert config['sweep']['workers'] == 1
    assert config['solver'] == DEFAULT_CONFIG['solver']


def test_defaults_not_mutated(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps({'sim': {'h': 0.5}}), encoding='utf-8')
    load_config(path)
    assert DEFAULT_CONFIG['sim']['h'] == 1e-3


def test_missing_explicit_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / 'absent.json')


def test_default_sim_section_is_valid():
    assert SimConfig.from_dict(DEFAULT_CONFIG['sim']) == SimConfig()


class TestSimConfig:
    @pytest.mark.parametrize('kwargs', [
        {'h': 0.0}, {'t_max': -1.0}, {'conv_tol': 0.0}, {'record_stride': 0}, {'record_stride': 1.5},
    ])
    def test_invalid_values(self, kwargs):
        with pytest.raises(ValueError):
            SimConfig(**kwargs)

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            SimConfig.from_dict({'step': 0.1})

    def test_overrides_skip_none(self):
        config = SimConfig(t_max=10.0).with_overrides(h=1e-2, t_max=None)
        assert config.h == 1e-2
        assert config.t_max == 10.0

    def test_to_dict(self):
        assert SimConfig.from_dict(SimConfig(h=2e-3).to_dict()) == SimConfig(h=2e-3)
