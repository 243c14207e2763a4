"""
Shared fixtures: the default macro parameter set and a small-window variant
cheap enough for Monte-Carlo tests.
"""
import pytest

from emf_sg.config import NetworkConfig


@pytest.fixture
def params():
    return NetworkConfig().to_params()


@pytest.fixture
def small_params():
    return NetworkConfig(tau_m=2000.0).to_params()


SMALL_CONFIG = """
[network]
lambda_b_per_km2 = 10.0
lambda_u_per_km2 = 100.0
tau_m = 2000.0

[mc]
n = 8
seed = 3
chunk_size = 4
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL_CONFIG, encoding="utf-8")
    return str(path)
