"""共享测试夹具"""

import json

import numpy as np
import pytest

from bip_lab.services import space_service


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def line3():
    """单位间距 3 点直线"""
    return space_service.line(3)


@pytest.fixture
def line5():
    return space_service.line(5)


@pytest.fixture
def line9():
    return space_service.line(9)


@pytest.fixture
def cycle4():
    return space_service.cycle(4)


@pytest.fixture
def pinched():
    """两个 3-团经由权重 1e-3 的桥点相连"""
    return space_service.pinched(3, 1e-3)


@pytest.fixture
def json_file(tmp_path):
    """把数据写入临时 JSON 文件并返回路径"""

    def write(name, data):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)

    return write
