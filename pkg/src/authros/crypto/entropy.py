"""Injectable randomness.

Every operation that consumes randomness takes an ``entropy`` argument.
Production paths pass :class:`SystemEntropy`; tests pass :class:`SeededEntropy`.
"""
from __future__ import annotations

import random
import secrets
from typing import Protocol


class Entropy(Protocol):
    def token_bytes(self, n: int) -> bytes: ...

    def randbelow(self, n: int) -> int: ...


class SystemEntropy:
    """OS randomness via :mod:`secrets`."""

    def token_bytes(self, n: int) -> bytes:
        return secrets.token_bytes(n)

    def randbelow(self, n: int) -> int:
        return secrets.randbelow(n)


class SeededEntropy:
    """Deterministic source for reproducible tests and simulations. Not secure."""

    def __init__(self, seed: int | str | bytes = 0):
        self._rng = random.Random(seed)

    def token_bytes(self, n: int) -> bytes:
        return self._rng.randbytes(n)

    def randbelow(self, n: int) -> int:
        return self._rng.randrange(n)


def default_entropy(entropy: Entropy | None) -> Entropy:
    return entropy if entropy is not None else SystemEntropy()
