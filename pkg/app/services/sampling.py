"""Reproducible random matrices: standard normal and α-stable (Lévy) entries.

Every matrix of a batch draws from its own Philox stream keyed by
``SeedSequence(seed, spawn_key=(index,))``, so batches are bit-identical
whatever the call order or degree of parallelism.

Stable draws use the Chambers-Mallows-Stuck transform in Nolan's S0
parameterization with unit scale and zero location. They are not rescaled.
"""
import logging
from typing import List

import numpy as np

from app.core.errors import NonFiniteError
from app.models.schemas import SampleSpec

logger = logging.getLogger(__name__)


def matrix_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for matrix `index` of a batch seeded with `seed`"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def stable_draws(rng: np.random.Generator, alpha: float, beta: float, size) -> np.ndarray:
    """Chambers-Mallows-Stuck α-stable variates, S0 parameterization, unit scale"""
    phi = (rng.random(size) - 0.5) * np.pi
    w = rng.standard_exponential(size)
    if alpha == 2.0:
        return 2.0 * np.sqrt(w) * np.sin(phi)
    if beta == 0.0:
        if alpha == 1.0:
            return np.tan(phi)
        return (np.sin(alpha * phi) / np.cos(phi) ** (1.0 / alpha)
                * (np.cos((1.0 - alpha) * phi) / w) ** ((1.0 - alpha) / alpha))
    cos_phi = np.cos(phi)
    if abs(alpha - 1.0) > 1e-8:
        zeta = beta * np.tan(np.pi * alpha / 2.0)
        a_phi = alpha * phi
        a1_phi = (1.0 - alpha) * phi
        s1 = ((np.sin(a_phi) + zeta * np.cos(a_phi)) / cos_phi
              * (np.cos(a1_phi) + zeta * np.sin(a1_phi))
              / (w * cos_phi) ** ((1.0 - alpha) / alpha))
        # S1 -> S0 shift
        return s1 - zeta
    b_phi = np.pi / 2.0 + beta * phi
    return 2.0 / np.pi * (b_phi * np.tan(phi) - beta * np.log(np.pi / 2.0 * w * cos_phi / b_phi))


def sample_one(spec: SampleSpec, index: int) -> np.ndarray:
    rng = matrix_rng(spec.seed, index)
    shape = (spec.rows, spec.cols)
    if spec.distribution == "normal":
        return rng.standard_normal(shape)
    x = stable_draws(rng, spec.alpha, spec.beta, shape)
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"stable draw {index} of seed {spec.seed} produced a non-finite entry")
    return x


def sample(spec: SampleSpec) -> List[np.ndarray]:
    """Draw `spec.batch` double-precision matrices"""
    logger.debug(f"Sampling {spec.batch} {spec.rows}x{spec.cols} {spec.label} matrices (seed {spec.seed})")
    return [sample_one(spec, index) for index in range(spec.batch)]


def derive_seed(seed: int, *keys: int) -> int:
    """A 64-bit seed derived from `seed` and integer `keys` (e.g. size, distribution index)"""
    state = np.random.SeedSequence(seed, spawn_key=tuple(keys)).generate_state(1, dtype=np.uint64)
    return int(state[0])
