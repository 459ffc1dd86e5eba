import json

import numpy as np
import pytest

from wavesplit.assembly import assemble_mass, assemble_stiffness
from wavesplit.grid import build_mesh
from wavesplit.integrators import SplitBlocks
from wavesplit.media import builtin_geometry, synth_channels
from wavesplit.spaces import (build_aux_space, build_cem_basis,
                              build_v2_choice2, make_pair)


@pytest.fixture(scope="session")
def mesh16():
    return build_mesh(16, 4)


@pytest.fixture(scope="session")
def kappa16(mesh16):
    return synth_channels(builtin_geometry("case2"), 16,
                          background=1.0, contrast=1e4)


@pytest.fixture(scope="session")
def operators16(mesh16, kappa16):
    return assemble_mass(mesh16), assemble_stiffness(mesh16, kappa16)


@pytest.fixture(scope="session")
def aux16(mesh16, kappa16):
    return build_aux_space(mesh16, kappa16, 2)


@pytest.fixture(scope="session")
def pair16(mesh16, kappa16, aux16):
    b1 = build_cem_basis(mesh16, kappa16, aux16, layers=1)
    b2 = build_v2_choice2(mesh16, kappa16, aux16, 2, layers=1)
    return make_pair(b1, b2, aux16)


@pytest.fixture(scope="session")
def blocks16(pair16, operators16):
    M, A = operators16
    return SplitBlocks.from_pair(pair16, M, A)


def small_config(**overrides):
    """A config dict that builds and runs in well under a second."""
    cfg = {
        "mesh": {"nx_fine": 8, "nx_coarse": 2},
        "medium": {"geometry": "case2", "background": 1.0, "contrast": 1e4},
        "source": {"f0": 0.5, "half_width": 1},
        "spaces": {
            "aux_per_element": 2,
            "layers": 1,
            "v2": {"kind": "choice2", "count": 1},
        },
        "schemes": [
            {"name": "split_omega1", "space": "pair", "tau": 0.02, "T": 0.1},
        ],
        "reference": {"tau": 0.004},
        "error_window": [0.02, 0.1],
        "snapshot_times": [0.1],
        "output_dir": "out",
        "seed": 0,
    }
    cfg.update(overrides)
    return cfg


@pytest.fixture
def small_config_file(tmp_path):
    def write(**overrides):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(small_config(**overrides)))
        return str(path)
    return write


def random_spd(rng, n, shift=1.0):
    R = rng.standard_normal((n, n))
    return R @ R.T + shift * n * np.eye(n)
