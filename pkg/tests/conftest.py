import pathlib

import numpy as np
import pytest

from scs_lab import gaussian_models as gm

DATA_DIR = pathlib.Path(__file__).parent / "data"
SCENE_PGM = DATA_DIR / "scene128.pgm"


@pytest.fixture(scope="session")
def power_model_64():
    """Zero-mean diagonal model with the standard compressible spectrum."""
    spectrum = gm.power_decay_spectrum(64, 3.0)
    return gm.make_gaussian(np.zeros(64), np.diag(spectrum.eigenvalues), reg_epsilon=0.0)


def random_orthonormal(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))
