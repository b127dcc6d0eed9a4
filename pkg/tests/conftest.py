import math

import numpy as np
import pytest

from squashsim import ModelParams


@pytest.fixture(scope="session")
def base_params() -> ModelParams:
    """The parameter set used for all headline numbers (feedback on)."""
    return ModelParams(
        gamma=1e-2, kappa=1e2, chi=2.5, g=0.025, phi=-math.pi / 2, eta=0.8, nbar=0.5
    )


@pytest.fixture(scope="session")
def measured_params() -> ModelParams:
    """Same set with the loop open (measurement only)."""
    return ModelParams(
        gamma=1e-2, kappa=1e2, chi=2.5, g=0.0, phi=-math.pi / 2, eta=0.8, nbar=0.5
    )


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


def random_density_matrix(rng: np.random.Generator, d: int) -> np.ndarray:
    """Random full-rank density matrix (Wishart-normalized)."""
    H = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = H @ H.conj().T
    return rho / np.trace(rho).real


def random_hermitian_unit_trace(rng: np.random.Generator, d: int) -> np.ndarray:
    """Random Hermitian matrix with unit trace (not necessarily positive)."""
    H = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    H = 0.5 * (H + H.conj().T)
    return H + (1.0 - np.trace(H).real) / d * np.eye(d)
