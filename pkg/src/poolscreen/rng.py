"""Counter-based random numbers for reproducible simulation.

Every draw is a pure function of ``(seed, trial, stream tag, counter)``, so
trial results do not depend on execution order and the compiled kernels can
reproduce the Python stream bit for bit.  The generator is the splitmix64
finalizer applied twice (key derivation, then per-counter output), which has
full 64-bit avalanche.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MULT1 = 0xBF58476D1CE4E5B9
_MULT2 = 0x94D049BB133111EB
_TRIAL_SALT = 0xC2B2AE3D27D4EB4F
_TAG_SALT = 0x165667B19E3779F9
_CTR_SALT = 0xD1B54A32D192ED03

# Stream tags: one per independent purpose inside a trial.
STREAM_TRUTH = 1   # infection indicators
STREAM_LOAD = 2    # per-sample viral loads
STREAM_NOISE = 3   # test-outcome noise

_U53 = 1.0 / 9007199254740992.0  # 2**-53


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MULT1) & MASK64
    z = ((z ^ (z >> 27)) * _MULT2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, trial: int, tag: int) -> int:
    k = mix64((seed + _GOLDEN) & MASK64)
    k = mix64(k ^ ((trial * _TRIAL_SALT) & MASK64))
    return mix64(k ^ ((tag * _TAG_SALT) & MASK64))


def u64_at(key: int, counter: int) -> int:
    return mix64(key ^ ((counter * _GOLDEN + _CTR_SALT) & MASK64))


def u01_at(key: int, counter: int) -> float:
    """Uniform double in [0, 1) from the top 53 bits of the draw."""
    return (u64_at(key, counter) >> 11) * _U53


def u01_block(key: int, start: int, count: int) -> np.ndarray:
    """Vectorized ``u01_at(key, start + i)`` for i in range(count)."""
    ctr = np.arange(start, start + count, dtype=np.uint64)
    z = np.uint64(key) ^ (ctr * np.uint64(_GOLDEN) + np.uint64(_CTR_SALT))
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MULT1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MULT2)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * _U53
