import numpy as np
import pytest

from core.rng import NoiseStreams
from core.schemas import ExperimentConfig
from core.spectral import SpectralGrid
from dynamics.lorenz import Lorenz63, Lorenz96
from dynamics.navier_stokes import NavierStokes2D
from observations.operators import ModalObservation


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid16():
    return SpectralGrid(16)


@pytest.fixture
def grid32():
    return SpectralGrid(32)


@pytest.fixture
def nse16(grid16):
    return NavierStokes2D(grid16, nu=0.1, grashof=2.0, forcing_shell=2)


@pytest.fixture
def nse32(grid32):
    return NavierStokes2D(grid32, nu=0.1, grashof=2.0, forcing_shell=2)


@pytest.fixture
def lorenz63():
    return Lorenz63()


@pytest.fixture
def lorenz96():
    return Lorenz96(dimension=40, forcing=8.0)


@pytest.fixture
def streams():
    return NoiseStreams(seed=7)


@pytest.fixture
def modal_nse16(nse16):
    return ModalObservation.from_shell(nse16.spectrum, max_wavenumber_sq=5.0)


@pytest.fixture
def smoke_config(tmp_path):
    """Tiny Lorenz 63 twin experiment: runs in well under a second per replica."""
    return ExperimentConfig(
        label="smoke",
        system={"kind": "lorenz63"},
        observation={"kind": "modal", "stride": 1, "sigma": 0.1},
        filter={"kind": "3dvar", "init_offset": 5.0, "covariance": {"kind": "projection", "beta": 0.5}},
        time={"dt": 0.005, "horizon": 2.0, "spin_up": 2.0},
        replicas=2,
        threads=2,
        output_dir=str(tmp_path / "runs"),
    )
