"""
End-to-end key-expansion sessions between Alice and Bob.

Information-theoretic mode spends ceil(log2 M) bits of a truly random
shared key per run to select the block. Computational mode expands a short
seed k0 into a block schedule with a keystream, transmits a fresh key k1
through an error-correcting code, and spends only |k0| once.
"""

import logging
from typing import Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, computed_field

from .analytic import DomainError, ProtocolParams, block_error_delta, dary_capacity
from .coding import DarySymbolCode, bits_to_symbols, symbols_to_bits
from .keystream import PAD_LABEL, SCHEDULE_LABEL, keystream
from .montecarlo import (
    KeyExhaustedError,
    KeyTape,
    RunOutcome,
    bits_to_int,
    block_key_bits,
    simulate_run,
)

logger = logging.getLogger(__name__)

SessionMode = Literal["info-theoretic", "computational"]
SessionStatus = Literal["success", "failed", "aborted"]


class KeyLedger(BaseModel):
    """Key bits in and out of a session.

    ``produced_bits`` counts reliable key: capacity-rated in information-
    theoretic mode, the recovered k1 in computational mode. ``raw_produced_bits``
    counts message bits carried by the runs.
    """

    initial_key_bits: int
    consumed_bits: int
    produced_bits: float
    raw_produced_bits: int

    @computed_field
    @property
    def net_bits(self) -> float:
        return self.produced_bits - self.consumed_bits

    @computed_field
    @property
    def raw_net_bits(self) -> int:
        return self.raw_produced_bits - self.consumed_bits


class SecurityBudget(BaseModel):
    eps_covert: float
    delta_prng: float

    @computed_field
    @property
    def secrecy_bound(self) -> float:
        return 2.0 * (self.eps_covert + self.delta_prng)


class SessionTranscript(BaseModel):
    mode: SessionMode
    status: SessionStatus
    detail: Optional[str] = None
    params: ProtocolParams
    runs: int
    symbols_sent: list[tuple[int, int]]
    decode_results: list[RunOutcome]
    symbol_errors: int
    capacity_bits_per_run: float
    code_rate: Optional[float] = None
    uncorrected_groups: Optional[int] = None
    schedules_agree: Optional[bool] = None
    key_recovered: Optional[bool] = None
    ledger: KeyLedger
    security: SecurityBudget


def security_budget(eps_covert: float, delta_prng: float) -> SecurityBudget:
    """Composable secrecy 2 (eps + delta) of the new key."""
    for name, value in (("eps_covert", eps_covert), ("delta_prng", delta_prng)):
        if not 0.0 <= value <= 0.5:
            raise DomainError(f"{name} must be in [0, 1/2], got {value}")
    return SecurityBudget(eps_covert=eps_covert, delta_prng=delta_prng)


def _is_power_of_two(value: int) -> bool:
    return value >= 1 and value & (value - 1) == 0


def _check_layout(params: ProtocolParams) -> int:
    if params.M is None:
        raise DomainError("sessions need an explicit block count M")
    if not _is_power_of_two(params.M) or not _is_power_of_two(params.D):
        raise DomainError(f"M = {params.M} and D = {params.D} must be powers of two")
    return params.M


def _capacity_per_run(params: ProtocolParams) -> float:
    if params.D < 2:
        return 0.0
    return dary_capacity(params.D, block_error_delta(params.D, params.p_click))


def session_info_theoretic(
    params: ProtocolParams, runs: int, shared_key: Sequence[int], master_seed: int
) -> SessionTranscript:
    """Send ``runs`` fresh uniformly random symbols, one per key-selected block.

    Running out of key stops the session early with status ``aborted``.
    """
    _check_layout(params)
    if runs < 0:
        raise DomainError(f"runs must be nonnegative, got {runs}")
    rng = np.random.default_rng(master_seed)
    tape = KeyTape(shared_key)

    outcomes: list[RunOutcome] = []
    status: SessionStatus = "success"
    detail = None
    for run in range(runs):
        try:
            outcomes.append(simulate_run(params, tape, rng))
        except KeyExhaustedError as e:
            status, detail = "aborted", f"run {run}: {e}"
            logger.warning(f"Information-theoretic session aborted at {detail}")
            break
        logger.debug(f"Run {run}: {outcomes[-1]}")

    completed = len(outcomes)
    capacity = _capacity_per_run(params)
    errors = sum(o.symbol_error for o in outcomes)
    ledger = KeyLedger(
        initial_key_bits=len(shared_key),
        consumed_bits=tape.consumed,
        produced_bits=completed * capacity,
        raw_produced_bits=completed * (params.D.bit_length() - 1),
    )
    logger.info(
        f"Information-theoretic session {status}: {completed}/{runs} runs, "
        f"{errors} symbol errors, reliable net {ledger.net_bits:.4f} bits"
    )
    return SessionTranscript(
        mode="info-theoretic",
        status=status,
        detail=detail,
        params=params,
        runs=completed,
        symbols_sent=[(o.chosen_block, o.signal_mode) for o in outcomes],
        decode_results=outcomes,
        symbol_errors=errors,
        capacity_bits_per_run=capacity,
        ledger=ledger,
        security=security_budget(params.eps, 0.0),
    )


def session_computational(
    params: ProtocolParams,
    k0: Sequence[int],
    new_key_bits: int,
    code: DarySymbolCode,
    master_seed: int,
    delta_prng: float = 0.0,
    encrypt_payload: bool = False,
    bob_k0: Optional[Sequence[int]] = None,
) -> SessionTranscript:
    """Covertly transmit a fresh key k1 on a keystream-driven block schedule.

    Bob derives his schedule from ``bob_k0`` (default: the same k0). With
    ``encrypt_payload`` Alice masks k1 with a keystream pad before encoding.
    """
    M = _check_layout(params)
    D = params.D
    if D < 2:
        raise DomainError("computational sessions need D >= 2")
    if code.alphabet_size != D:
        raise DomainError(f"code alphabet {code.alphabet_size} does not match D = {D}")
    width = D.bit_length() - 1
    if new_key_bits < 1 or new_key_bits % width:
        raise DomainError(f"new_key_bits = {new_key_bits} must be a positive multiple of {width}")
    bob_k0 = k0 if bob_k0 is None else bob_k0

    rng = np.random.default_rng(master_seed)
    k1 = rng.integers(0, 2, size=new_key_bits, dtype=np.uint8)
    payload = k1 ^ keystream(k0, new_key_bits, PAD_LABEL) if encrypt_payload else k1
    codeword = code.encode(bits_to_symbols(payload, D))

    per_run = block_key_bits(M)
    schedule_bits = len(codeword) * per_run
    alice = KeyTape(keystream(k0, schedule_bits, SCHEDULE_LABEL))
    bob_bits = keystream(bob_k0, schedule_bits, SCHEDULE_LABEL)
    bob_blocks = [
        bits_to_int(bob_bits[run * per_run : (run + 1) * per_run]) % M
        for run in range(len(codeword))
    ]

    outcomes: list[RunOutcome] = []
    received: list[int] = []
    agree = True
    for run, symbol in enumerate(codeword):
        outcome = simulate_run(params, alice, rng, signal_mode=symbol)
        outcomes.append(outcome)
        if bob_blocks[run] == outcome.chosen_block:
            received.append(outcome.decoded_mode)
        else:
            # Bob watches a block without the signal and can only guess
            agree = False
            received.append(int(rng.integers(D)))

    decoded, flags = code.decode_groups(received)
    recovered = symbols_to_bits(decoded, D)
    if encrypt_payload:
        recovered = recovered ^ keystream(bob_k0, new_key_bits, PAD_LABEL)
    # Uncorrected groups count as errors even when the tie-break guessed right
    success = not any(flags) and bool(np.array_equal(recovered, k1))
    uncorrected_groups = sum(flags)

    ledger = KeyLedger(
        initial_key_bits=len(k0),
        consumed_bits=len(k0),
        produced_bits=new_key_bits if success else 0,
        raw_produced_bits=len(codeword) * width,
    )
    status: SessionStatus = "success" if success else "failed"
    if success:
        logger.info(
            f"Computational session recovered {new_key_bits} key bits, net {ledger.net_bits:g}"
        )
    else:
        logger.warning(
            f"Computational session failed: k1 not recovered "
            f"({uncorrected_groups} uncorrected groups, schedules agree: {agree})"
        )
    return SessionTranscript(
        mode="computational",
        status=status,
        detail=None if success else "recovered key does not match k1",
        params=params,
        runs=len(codeword),
        symbols_sent=[(o.chosen_block, o.signal_mode) for o in outcomes],
        decode_results=outcomes,
        symbol_errors=sum(o.symbol_error for o in outcomes),
        capacity_bits_per_run=_capacity_per_run(params),
        code_rate=code.rate,
        uncorrected_groups=uncorrected_groups,
        schedules_agree=agree,
        key_recovered=success,
        ledger=ledger,
        security=security_budget(params.eps, delta_prng),
    )
