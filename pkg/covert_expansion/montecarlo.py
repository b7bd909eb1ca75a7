"""
Photon-level Monte Carlo simulation of protocol runs.

A run picks a block with pre-shared key bits and a signal mode within it.
The signal mode always clicks (lossless detection); each of the other D - 1
modes of the block clicks independently with probability p_c. Bob decodes
the signal mode when it clicks alone and otherwise picks uniformly among the
clicked modes. Modes outside the chosen block never reach Bob's decoder and
are not simulated.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel

from .analytic import DomainError, ProtocolParams, block_error_delta
from .config import get_config

logger = logging.getLogger(__name__)

Z_95 = 1.96

# Trials per seeded chunk; changing it changes every campaign's random stream
CAMPAIGN_CHUNK_SIZE = 65536


class KeyExhaustedError(RuntimeError):
    """A key tape cannot supply the requested number of bits."""


class KeyTape:
    """Sequential reader over a shared bit string that counts consumption."""

    def __init__(self, bits: Sequence[int]):
        self._bits = np.asarray(bits, dtype=np.uint8)
        if np.any(self._bits > 1):
            raise DomainError("key bits must be 0 or 1")
        self.consumed = 0

    @property
    def remaining(self) -> int:
        return int(self._bits.size) - self.consumed

    def take(self, count: int) -> np.ndarray:
        if count > self.remaining:
            raise KeyExhaustedError(
                f"need {count} key bits, {self.remaining} of {self._bits.size} remain"
            )
        chunk = self._bits[self.consumed : self.consumed + count]
        self.consumed += count
        return chunk


class RunOutcome(BaseModel):
    chosen_block: int
    signal_mode: int
    click_set: list[int]
    decoded_mode: int
    collision: bool
    symbol_error: bool


class SimulationReport(BaseModel):
    """Aggregated outcome of a Monte Carlo campaign."""

    nbar: float
    p_c: float
    D: int
    M: int
    trials: int
    master_seed: int
    collisions: int
    symbol_errors: int
    collision_rate: float
    collision_ci: float
    symbol_error_rate: float
    symbol_error_ci: float
    analytic_delta: float
    z_score: float
    consumed_bits_per_run: int
    produced_raw_bits_per_run: float
    total_consumed_bits: int


def block_key_bits(M: int) -> int:
    """Key bits consumed per run to select one of M blocks: ceil(log2 M)."""
    if M < 1:
        raise DomainError(f"M must be >= 1, got {M}")
    return (M - 1).bit_length()


def bits_to_int(bits: Sequence[int]) -> int:
    """Big-endian bit string to integer."""
    value = 0
    for bit in bits:
        value = (value << 1) | int(bit)
    return value


def binomial_ci(successes: int, trials: int) -> tuple[float, float]:
    """Point estimate and 95% normal-approximation half-width."""
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    rate = successes / trials
    return rate, Z_95 * math.sqrt(rate * (1.0 - rate) / trials)


def z_score(rate: float, expected: float, trials: int) -> float:
    """Standardized deviation of an empirical rate from its expected value."""
    spread = math.sqrt(expected * (1.0 - expected) / trials)
    if spread == 0.0:
        return 0.0 if rate == expected else math.copysign(math.inf, rate - expected)
    return (rate - expected) / spread


def _require_blocks(params: ProtocolParams) -> int:
    if params.M is None:
        raise DomainError("simulation needs an explicit block count M")
    return params.M


def simulate_run(
    params: ProtocolParams,
    key: KeyTape,
    rng: np.random.Generator,
    signal_mode: Optional[int] = None,
) -> RunOutcome:
    """Simulate one run. ``signal_mode`` defaults to a uniform message symbol."""
    M = _require_blocks(params)
    D = params.D
    block = bits_to_int(key.take(block_key_bits(M))) % M

    if signal_mode is None:
        signal_mode = int(rng.integers(D))
    elif not 0 <= signal_mode < D:
        raise DomainError(f"signal mode {signal_mode} outside block of {D} modes")

    others = np.delete(np.arange(D), signal_mode)
    extra = others[rng.random(D - 1) < params.p_click]
    click_set = sorted([signal_mode, *(int(m) for m in extra)])

    if len(click_set) == 1:
        decoded = signal_mode
    else:
        decoded = int(rng.choice(click_set))

    return RunOutcome(
        chosen_block=block,
        signal_mode=signal_mode,
        click_set=click_set,
        decoded_mode=decoded,
        collision=len(click_set) > 1,
        symbol_error=decoded != signal_mode,
    )


def _chunk_outcomes(
    index: int, size: int, D: int, p_c: float, master_seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-trial extra clicks and decoder errors for the first ``size`` trials of a chunk.

    Every chunk draws a full CAMPAIGN_CHUNK_SIZE block from a stream keyed by
    (master_seed, index), so trial t depends only on master_seed and t.
    """
    rng = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))
    extra = rng.binomial(D - 1, p_c, size=CAMPAIGN_CHUNK_SIZE)[:size]
    # Decoder picks the signal with probability 1 / (number of clicked modes)
    rescued = rng.random(CAMPAIGN_CHUNK_SIZE)[:size] * (1 + extra) < 1.0
    return extra, ~rescued


def _simulate_chunk(
    index: int, size: int, D: int, p_c: float, master_seed: int
) -> tuple[int, int]:
    extra, errors = _chunk_outcomes(index, size, D, p_c, master_seed)
    return int(np.count_nonzero(extra)), int(np.count_nonzero(errors))


def run_campaign(params: ProtocolParams, trials: int, master_seed: int) -> SimulationReport:
    """Aggregate ``trials`` independent runs into a report."""
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    if master_seed < 0:
        raise DomainError(f"master_seed must be nonnegative, got {master_seed}")
    M = _require_blocks(params)
    D = params.D
    p_c = params.p_click
    config = get_config()

    chunk = CAMPAIGN_CHUNK_SIZE
    sizes = [min(chunk, trials - start) for start in range(0, trials, chunk)]
    jobs = [(i, size, D, p_c, master_seed) for i, size in enumerate(sizes)]

    if config.campaign_workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=config.campaign_workers) as pool:
            counts = list(pool.map(lambda job: _simulate_chunk(*job), jobs))
    else:
        counts = [_simulate_chunk(*job) for job in jobs]
    logger.debug(f"Campaign finished {len(jobs)} chunks of up to {chunk} trials")

    collisions = sum(c for c, _ in counts)
    errors = sum(e for _, e in counts)
    collision_rate, collision_ci = binomial_ci(collisions, trials)
    error_rate, error_ci = binomial_ci(errors, trials)
    delta = block_error_delta(D, p_c)
    per_run = block_key_bits(M)

    report = SimulationReport(
        nbar=params.nbar,
        p_c=p_c,
        D=D,
        M=M,
        trials=trials,
        master_seed=master_seed,
        collisions=collisions,
        symbol_errors=errors,
        collision_rate=collision_rate,
        collision_ci=collision_ci,
        symbol_error_rate=error_rate,
        symbol_error_ci=error_ci,
        analytic_delta=delta,
        z_score=z_score(collision_rate, delta, trials),
        consumed_bits_per_run=per_run,
        produced_raw_bits_per_run=math.log2(D),
        total_consumed_bits=per_run * trials,
    )
    logger.info(
        f"Campaign D={D}, p_c={p_c:g}, trials={trials}: collision rate "
        f"{collision_rate:.6f} vs analytic {delta:.6f} (z={report.z_score:.2f})"
    )
    return report
