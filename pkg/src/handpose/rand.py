"""Deterministic random streams based on SplitMix64.

All stochastic code in the package derives its randomness from a 64-bit
seed through these helpers, so results are reproducible across platforms.
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64_MASK = 0xFFFFFFFFFFFFFFFF


def _finalize(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def splitmix64_stream(seed: int, n: int) -> np.ndarray:
    """First ``n`` outputs of SplitMix64 seeded with ``seed``, as uint64."""
    base = np.uint64(seed & _U64_MASK)
    with np.errstate(over="ignore"):
        states = base + np.arange(1, n + 1, dtype=np.uint64) * _GAMMA
        return _finalize(states)


def uniform(seed: int, n: int, lo: float, hi: float) -> np.ndarray:
    """``n`` floats uniform in [lo, hi), deterministic from ``seed``."""
    u = splitmix64_stream(seed, n)
    # top 53 bits -> float64 in [0, 1)
    frac = (u >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
    return lo + frac * (hi - lo)


def derive_seed(seed: int, index: int) -> int:
    """Independent child seed number ``index`` of ``seed``."""
    return int(splitmix64_stream(seed ^ (index * 0x5851F42D4C957F2D & _U64_MASK), 1)[0])


def generator(seed: int, index: int = 0) -> np.random.Generator:
    """NumPy generator keyed to a SplitMix64-derived child seed."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, index)))
