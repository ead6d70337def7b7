import numpy as np
import pytest

from nrsctl.experiment import ExperimentConfig, default_detunings
from nrsctl.signal import default_grid


@pytest.fixture
def grid():
    return default_grid(0.1)


@pytest.fixture
def small_config():
    """Cheap config for sampling and plumbing tests."""
    return ExperimentConfig(
        dt_ns=0.5,
        time_bin_ns=2.0,
        detunings=tuple(default_detunings(9)),
        total_counts=20_000,
        run_length_s=60.0,
        sweep_period_s=2.0,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
