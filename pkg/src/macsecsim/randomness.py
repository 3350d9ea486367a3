"""Single randomness source feeding nonces, keys and boot timestamps.

Default mode is a seeded PRNG so that a (spec, seed) pair fully determines
a run.  The "os" mode draws hardware entropy instead; it exists for
interactive use and stays off in tests.
"""

from __future__ import annotations

import os
import random


class RandomSource:
    def __init__(self, seed: int | None = None, mode: str = "seeded"):
        if mode not in ("seeded", "os"):
            raise ValueError(f"unknown randomness mode {mode!r}")
        self.mode = mode
        self.seed = seed if seed is not None else 0
        self._rng = random.Random(self.seed)
        self._nonces_issued: set[bytes] = set()

    def rand_bytes(self, n: int) -> bytes:
        if self.mode == "os":
            return os.urandom(n)
        return self._rng.randbytes(n)

    def lldp_nonce(self) -> bytes:
        """Fresh 12-byte nonce; re-issue of a previous nonce is a hard error."""
        nonce = self.rand_bytes(12)
        if nonce in self._nonces_issued:
            raise AssertionError("nonce reuse detected")
        self._nonces_issued.add(nonce)
        return nonce

    def key_material(self) -> bytes:
        return self.rand_bytes(16)

    def boot_seq(self) -> int:
        """Bootup-timestamp-style seed for a switch's discovery tx sequence."""
        return self._rng.randrange(1, 2**31) if self.mode == "seeded" else int.from_bytes(os.urandom(4), "big") >> 1 or 1

    def randrange(self, *args) -> int:
        return self._rng.randrange(*args)

    def uniform(self) -> float:
        return self._rng.random()

    def choice(self, seq):
        return self._rng.choice(seq)

    def sample(self, seq, k):
        return self._rng.sample(seq, k)


class IvUniquenessRegistry:
    """Runtime assertion that no (key, IV) pair is ever used twice."""

    def __init__(self):
        self._seen: set[tuple[bytes, bytes]] = set()

    def observe(self, key: bytes, iv: bytes) -> None:
        pair = (key, iv)
        if pair in self._seen:
            raise AssertionError(f"(SAK, IV) reuse: iv={iv.hex()}")
        self._seen.add(pair)
