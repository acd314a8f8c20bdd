"""Counter-based pseudorandom streams.

Every random draw in the simulation engine comes from a splitmix64 stream
whose key is a fold of (seed, purpose tag, identifying integers).  Keys are
pure functions of their inputs, so any event list can be regenerated from
scratch and is independent of query order.  The numba fast path in
``fast.py`` reimplements the exact same arithmetic; ``tests/test_fast.py``
asserts bit-identity between the two.
"""

from __future__ import annotations

import math
import os

MASK64 = 0xFFFFFFFFFFFFFFFF
GAMMA = 0x9E3779B97F4A7C15

# stream purpose tags (arbitrary distinct constants)
TAG_EDGE = 0xE1
TAG_SITE = 0x51
TAG_SAMPLE = 0x5A
TAG_RETRY = 0x7E
TAG_SHUFFLE = 0x0F
TAG_WALK = 0xCA
TAG_BLOCK = 0xB1

# Fault injection for the selftest: when enabled, stream output depends on a
# global call counter, which destroys reproducibility of re-queries and must
# be caught by the ring-store consistency check.
_fault = {"enabled": False, "counter": 0}


def enable_rng_fault(flag: bool = True) -> None:
    _fault["enabled"] = flag
    _fault["counter"] = 0


def fault_active() -> bool:
    return _fault["enabled"]


def sm64(z: int) -> int:
    """splitmix64 output function: a bijective mix of a 64-bit counter."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def combine(h: int, v: int) -> int:
    """Fold value v into key h."""
    return sm64((h ^ sm64((v + GAMMA) & MASK64)) & MASK64)


def zigzag(c: int) -> int:
    """Map a signed 64-bit integer to unsigned, small magnitudes first."""
    if not (-(1 << 62) < c < (1 << 62)):
        raise OverflowError(f"lattice coordinate {c} out of supported range")
    return ((c << 1) ^ (c >> 63)) & MASK64


def derive_key(seed: int, *components: int) -> int:
    h = seed & MASK64
    for v in components:
        h = combine(h, v & MASK64)
    return h


def pack_small_coords(coords) -> int:
    """Zigzag-pack up to four coordinates of magnitude < 2^15 into one word."""
    acc = 0
    for i, c in enumerate(coords):
        if not -32768 < c < 32768 or i >= 4:
            raise OverflowError("packed coordinates limited to 4 axes of +-32767")
        acc |= zigzag(c) << (16 * i)
    return acc & MASK64


class Stream:
    """Sequential draws from a keyed splitmix64 stream."""

    __slots__ = ("state",)

    def __init__(self, key: int):
        self.state = key & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GAMMA) & MASK64
        out = sm64(self.state)
        if _fault["enabled"]:
            _fault["counter"] += 1
            out ^= _fault["counter"]
        return out

    def next_unit(self) -> float:
        """Uniform in [0, 1) with 53-bit resolution."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def next_exp(self, rate: float) -> float:
        """Exponential holding time; inf when the rate is zero."""
        if rate <= 0.0:
            return math.inf
        return -math.log1p(-self.next_unit()) / rate

    def poisson(self, lam: float) -> int:
        return poisson_draw(self, lam)

    def randint(self, n: int) -> int:
        """Uniform in {0, ..., n-1} (n <= 2^53, rejection-free via floats)."""
        return int(self.next_unit() * n)


def poisson_draw(stream: Stream, lam: float) -> int:
    """Poisson variate from a Stream.

    Knuth multiplication for small means, Hormann's PTRS transformed
    rejection for large ones; both consume only next_unit() so the python
    and numba implementations stay interchangeable.
    """
    if lam <= 0.0:
        return 0
    if lam < 10.0:
        limit = math.exp(-lam)
        prod = stream.next_unit()
        k = 0
        while prod > limit:
            prod *= stream.next_unit()
            k += 1
        return k
    # PTRS (W. Hormann, 1993), valid for lam >= 10
    b = 0.931 + 2.53 * math.sqrt(lam)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    log_lam = math.log(lam)
    while True:
        u = stream.next_unit() - 0.5
        v = stream.next_unit()
        if v == 0.0:
            continue
        us = 0.5 - abs(u)
        k = int(math.floor((2.0 * a / us + b) * u + lam + 0.43))
        if us >= 0.07 and v <= v_r:
            return k
        if k < 0 or (us < 0.013 and v > us):
            continue
        if (math.log(v) + math.log(inv_alpha) - math.log(a / (us * us) + b)
                <= k * log_lam - lam - math.lgamma(k + 1.0)):
            return k


def seed_from_env_or(default: int) -> int:
    raw = os.environ.get("STIR_ORBITS_SEED")
    return int(raw) if raw else default
