import os
import sys

import numpy as np
import pytest

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from bundletr.config import SolverConfig  # noqa: E402
from bundletr.problems import counterexample_quadratic  # noqa: E402


@pytest.fixture
def repo_root():
    return ROOT


@pytest.fixture
def quadratic():
    return counterexample_quadratic()


@pytest.fixture
def oscillation_config():
    return SolverConfig(
        gamma=0.5, gamma_tilde=0.75, Gamma=0.8, R_initial=1.0, Q_policy="zero",
        max_planes=3, keep_newest=1, max_inner=12, trial_mode="direct", fallback_enabled=False,
    )


@pytest.fixture
def repaired_config():
    return SolverConfig(
        gamma=0.5, gamma_tilde=0.75, Gamma=0.8, R_initial=1.0, Q_policy="scaled_identity", Q_delta=0.5,
        trial_mode="backtrack", backtrack_alpha=0.5, fallback_enabled=True, eps_stop=1e-14, max_outer=200,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)
