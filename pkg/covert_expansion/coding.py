"""
Error-correcting codes over D-ary symbols.

A session transmits one D-ary symbol per covert run, so codes operate on
symbol sequences directly. The default is r-fold repetition decoded by
plurality vote.
"""

from abc import ABC, abstractmethod
from collections import Counter
from typing import Sequence

import numpy as np

from .analytic import DomainError


class DarySymbolCode(ABC):
    """Code over the alphabet {0, ..., alphabet_size - 1}."""

    def __init__(self, alphabet_size: int):
        if alphabet_size < 2:
            raise DomainError(f"alphabet size must be >= 2, got {alphabet_size}")
        self.alphabet_size = alphabet_size

    @property
    @abstractmethod
    def rate(self) -> float:
        """Information symbols per channel symbol."""

    @abstractmethod
    def encode(self, info_symbols: Sequence[int]) -> list[int]: ...

    @abstractmethod
    def decode_groups(self, received: Sequence[int]) -> tuple[list[int], list[bool]]:
        """Decoded information symbols and a per-group uncorrected flag."""

    def decode(self, received: Sequence[int]) -> tuple[list[int], bool]:
        """Decoded information symbols and whether any group was uncorrectable."""
        decoded, flags = self.decode_groups(received)
        return decoded, any(flags)

    def _check_symbols(self, symbols: Sequence[int]) -> None:
        for symbol in symbols:
            if not 0 <= symbol < self.alphabet_size:
                raise DomainError(f"symbol {symbol} outside alphabet of size {self.alphabet_size}")


class RepetitionCode(DarySymbolCode):
    """Each symbol repeated r times; plurality vote per group."""

    def __init__(self, alphabet_size: int, repetitions: int = 1):
        super().__init__(alphabet_size)
        if repetitions < 1:
            raise DomainError(f"repetitions must be >= 1, got {repetitions}")
        self.repetitions = repetitions

    @property
    def rate(self) -> float:
        return 1.0 / self.repetitions

    def encode(self, info_symbols: Sequence[int]) -> list[int]:
        self._check_symbols(info_symbols)
        repeated = np.repeat(np.asarray(info_symbols, dtype=np.int64), self.repetitions)
        return [int(s) for s in repeated]

    def decode_groups(self, received: Sequence[int]) -> tuple[list[int], list[bool]]:
        """Plurality vote per group, with a per-group uncorrected flag.

        A group is flagged when the vote is tied or the winner lacks a strict
        majority. A tie keeps the smallest tied symbol.
        """
        if len(received) % self.repetitions:
            raise DomainError(
                f"received length {len(received)} is not a multiple of {self.repetitions}"
            )
        self._check_symbols(received)
        decoded, flags = [], []
        for start in range(0, len(received), self.repetitions):
            votes = Counter(int(s) for s in received[start : start + self.repetitions])
            top = max(votes.values())
            leaders = sorted(s for s, n in votes.items() if n == top)
            decoded.append(leaders[0])
            flags.append(len(leaders) > 1 or 2 * top <= self.repetitions)
        return decoded, flags


def bits_to_symbols(bits: Sequence[int], alphabet_size: int) -> list[int]:
    """Group bits big-endian into log2(alphabet_size)-bit symbols."""
    width = _symbol_width(alphabet_size)
    array = np.asarray(bits, dtype=np.int64)
    if array.size % width:
        raise DomainError(f"{array.size} bits do not split into {width}-bit symbols")
    weights = 1 << np.arange(width - 1, -1, -1)
    return [int(s) for s in array.reshape(-1, width) @ weights]


def symbols_to_bits(symbols: Sequence[int], alphabet_size: int) -> np.ndarray:
    width = _symbol_width(alphabet_size)
    array = np.asarray(symbols, dtype=np.int64).reshape(-1, 1)
    shifts = np.arange(width - 1, -1, -1)
    return ((array >> shifts) & 1).astype(np.uint8).reshape(-1)


def _symbol_width(alphabet_size: int) -> int:
    if alphabet_size < 2 or alphabet_size & (alphabet_size - 1):
        raise DomainError(f"alphabet size must be a power of two >= 2, got {alphabet_size}")
    return alphabet_size.bit_length() - 1
