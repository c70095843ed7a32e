"""Shared fixtures: small systems and seeded channel draws that keep solves fast."""

from pathlib import Path
from typing import Callable

import numpy as np
import pytest

from src.algorithms import SolveOptions
from src.channel import ChannelSet, FadingParams, ScenarioGeometry, build_scenario
from src.model import SystemSpec


def draw(spec: SystemSpec, seed: int) -> ChannelSet:
    rng = np.random.default_rng(seed)
    geometry = ScenarioGeometry.sample(rng)
    return build_scenario(geometry, FadingParams(), spec.antenna_counts(), rng)


@pytest.fixture
def small_spec() -> SystemSpec:
    return SystemSpec(n_tx=2, n_user_t=2, n_user_r=2, n_streams=(1, 1), m_elements=4)


@pytest.fixture
def channel_factory() -> Callable[[SystemSpec, int], ChannelSet]:
    return draw


@pytest.fixture
def small_channels(small_spec: SystemSpec) -> ChannelSet:
    return draw(small_spec, seed=7)


@pytest.fixture
def fast_options() -> SolveOptions:
    return SolveOptions(
        bcd_max_iter=6,
        ccp_max_iter=4,
        tau_grid_step=0.25,
        tau_refine_rounds=1,
        ts_inner_max_iter=6,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(2024)


def random_complex(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@pytest.fixture
def cplx(rng: np.random.Generator) -> Callable[..., np.ndarray]:
    """Draw CN(0, 1) arrays of a given shape from the shared generator."""
    return lambda *shape: random_complex(rng, *shape)


TINY_TOML = """
[system]
n_tx = 2
n_user_t = 1
n_user_r = 1
n_streams = [1, 1]
m_elements = 2

[experiment]
protocols = ["ES", "MS", "TS"]
trials = 1
base_seed = 3

[solver]
bcd_max_iter = 4
ccp_max_iter = 3
tau_grid_step = 0.5
tau_refine_rounds = 0
ts_inner_max_iter = 4
"""


@pytest.fixture
def tiny_config_file(tmp_path) -> Path:
    """A TOML experiment small enough to run end to end in a test."""
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_TOML, encoding="utf-8")
    return path
