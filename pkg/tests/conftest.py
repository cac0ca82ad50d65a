import numpy as np
import pytest

from graspdec.core.config import config
from graspdec.core.model import standard_montage
from graspdec.core.simulate import ProtocolConfig, planted_alpha_config, protocol_preset, simulate_session


@pytest.fixture(autouse=True)
def isolated_config(tmp_path_factory, monkeypatch):
    """Built-in defaults from an empty config directory, no thread override."""
    config_dir = tmp_path_factory.mktemp("config")
    monkeypatch.setenv("GRASPDEC_CONFIG_DIR", str(config_dir))
    monkeypatch.delenv("GRASPDEC_THREADS", raising=False)
    config.reload()
    yield config_dir
    config.reload()


@pytest.fixture
def montage():
    return standard_montage()


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def short_protocol():
    """Two blocks of six trials with short rests."""
    return ProtocolConfig(n_blocks=2, trials_per_block=6, rest_between_blocks_s=5.0, seed=3)


@pytest.fixture(scope="session")
def high_contrast_session():
    """50 trials per graspable object with a 4:1 planted alpha contrast."""
    return simulate_session(protocol_preset("per-object-50", seed=11), planted_alpha_config(4.0, seed=11))


@pytest.fixture
def random_spd():
    def make(n, rng, condition=10.0):
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        eigenvalues = np.exp(rng.uniform(0.0, np.log(condition), size=n))
        return (q * eigenvalues) @ q.T

    return make
