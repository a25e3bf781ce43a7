"""Deterministic seed derivation for ensemble streams.

Run r of an ensemble with base seed s uses the stream seed
``derive_stream(s, r) = splitmix64(s ^ splitmix64(r + GAMMA))`` so that
streams are decorrelated and reproducible across processes.
"""

MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    x = (x + _GAMMA) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def derive_stream(base_seed: int, run_index: int) -> int:
    """64-bit stream seed for one ensemble member."""
    return splitmix64((base_seed & MASK64) ^ splitmix64(run_index & MASK64))


def fold32(seed: int) -> int:
    """Fold a 64-bit seed to 32 bits (numba's RNG takes 32-bit seeds)."""
    s = seed & MASK64
    return ((s >> 32) ^ s) & 0xFFFFFFFF
