"""
Brute-force oracle for detection bias and secrecy on small instances.

Eve's hypotheses are photon-number-diagonal, so trace distance reduces to
total-variation distance between count distributions and everything here is
exact enumeration over joint count patterns.

Counts are recorded on the saturating alphabet {0, 1, ..., cutoff, >cutoff}:
the probability above the cutoff is kept as a final outcome instead of being
dropped or renormalized. Reported distances are therefore those of a detector
that saturates above the cutoff, and no bound check is disturbed by
truncation.
"""

import logging
import math
from dataclasses import dataclass
from functools import reduce
from itertools import combinations
from typing import Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel
from scipy.special import comb
from scipy.stats import binom

from .analytic import DomainError, p_click_thermal
from .config import ORACLE_STATE_LIMIT, get_config

logger = logging.getLogger(__name__)


class OracleCapacityError(DomainError):
    """Requested enumeration exceeds the configured caps."""


@dataclass(frozen=True)
class PhotonCountDistribution:
    """Single-mode photon-count distribution truncated at ``cutoff``."""

    pmf: np.ndarray
    cutoff: int
    tail_mass: float
    truncation_dirty: bool

    def saturated(self) -> np.ndarray:
        """Probabilities over {0..cutoff, >cutoff}."""
        return np.append(self.pmf, self.tail_mass)


@dataclass(frozen=True)
class ModePatternDistribution:
    """Joint distribution over N-tuples of saturated per-mode counts."""

    probs: np.ndarray
    N: int

    @classmethod
    def product(cls, modes: Sequence[np.ndarray]) -> "ModePatternDistribution":
        return cls(probs=reduce(np.multiply.outer, modes), N=len(modes))

    def total(self) -> float:
        return float(self.probs.sum())


Distribution = Union[np.ndarray, PhotonCountDistribution, ModePatternDistribution]


class FilterBoundReport(BaseModel):
    """Detection biases of the block and i.i.d. protocols and the filter bound."""

    N: int
    q: float
    nbar: float
    cutoff: int
    eps: float
    eps_iid: float
    p0: float
    eps_iid_filtered: Optional[float]
    bound_holds: bool
    eps_k: list[float]
    p_k: list[float]
    mixture_bias: float
    bias_gap: float
    state_residual: float
    eps_k_monotone: bool
    iid_sqrt_bound: Optional[float]
    iid_sqrt_bound_holds: Optional[bool]
    tail_mass: float
    truncation_dirty: bool


class SecrecyBoundReport(BaseModel):
    """Secrecy of the message given Eve's state, against twice the worst bias."""

    N: int
    nbar: float
    messages: int
    cutoff: int
    prior: list[float]
    eps_m: list[float]
    lhs: float
    rhs: float
    holds: bool


def _truncated(probs: np.ndarray, cutoff: int, tail: float) -> PhotonCountDistribution:
    tolerance = get_config().tail_tolerance
    dirty = tail > tolerance
    if dirty:
        logger.debug(f"Tail mass {tail:.3g} above cutoff {cutoff} exceeds {tolerance:g}")
    return PhotonCountDistribution(
        pmf=probs, cutoff=cutoff, tail_mass=float(tail), truncation_dirty=dirty
    )


def _check_pmf_args(nbar: float, cutoff: int) -> None:
    if nbar < 0.0:
        raise DomainError(f"nbar must be nonnegative, got {nbar}")
    if cutoff < 0:
        raise DomainError(f"cutoff must be nonnegative, got {cutoff}")


def thermal_pmf(nbar: float, cutoff: int) -> PhotonCountDistribution:
    """Bose-Einstein law p(n) = nbar^n / (1 + nbar)^(n+1), n = 0..cutoff."""
    _check_pmf_args(nbar, cutoff)
    ratio = p_click_thermal(nbar)
    n = np.arange(cutoff + 1)
    probs = (1.0 - ratio) * ratio**n
    return _truncated(probs, cutoff, ratio ** (cutoff + 1))


def signal_pmf(nbar: float, cutoff: int) -> PhotonCountDistribution:
    """One signal photon on top of an independent thermal background."""
    _check_pmf_args(nbar, cutoff)
    ratio = p_click_thermal(nbar)
    background = (1.0 - ratio) * ratio ** np.arange(cutoff)
    probs = np.concatenate(([0.0], background))
    return _truncated(probs, cutoff, ratio**cutoff)


def _as_array(dist: Distribution) -> np.ndarray:
    if isinstance(dist, PhotonCountDistribution):
        return dist.saturated()
    if isinstance(dist, ModePatternDistribution):
        return dist.probs
    return np.asarray(dist, dtype=np.float64)


def tv_distance(p: Distribution, q: Distribution) -> float:
    """Total-variation distance 1/2 sum |p - q|."""
    a, b = _as_array(p), _as_array(q)
    if a.shape != b.shape:
        raise DomainError(f"distribution shapes differ: {a.shape} vs {b.shape}")
    return float(0.5 * np.abs(a - b).sum())


def _check_caps(N: int, cutoff: int) -> None:
    config = get_config()
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    if cutoff < 0:
        raise DomainError(f"cutoff must be nonnegative, got {cutoff}")
    if N > config.oracle_max_modes:
        raise OracleCapacityError(
            f"N = {N} exceeds the enumeration cap of {config.oracle_max_modes} modes"
        )
    if cutoff > config.oracle_max_cutoff:
        raise OracleCapacityError(
            f"cutoff = {cutoff} exceeds the enumeration cap of {config.oracle_max_cutoff}"
        )
    states = (cutoff + 2) ** N
    state_cap = min(config.oracle_max_states, ORACLE_STATE_LIMIT)
    if states > state_cap:
        raise OracleCapacityError(f"{states} joint count patterns exceed the cap of {state_cap}")


class _ModePair:
    """Saturated thermal and signal arrays for one (nbar, cutoff)."""

    def __init__(self, nbar: float, cutoff: int):
        self.noise = thermal_pmf(nbar, cutoff)
        self.signal = signal_pmf(nbar, cutoff)
        self.tail_mass = max(self.noise.tail_mass, self.signal.tail_mass)
        self.truncation_dirty = self.noise.truncation_dirty or self.signal.truncation_dirty

    def pattern(self, N: int, signal_modes: Sequence[int]) -> ModePatternDistribution:
        chosen = set(signal_modes)
        modes = [
            self.signal.saturated() if i in chosen else self.noise.saturated() for i in range(N)
        ]
        return ModePatternDistribution.product(modes)

    def placement_mixture(self, N: int, k: int) -> ModePatternDistribution:
        """Uniform mixture over every placement of k signals among N modes.

        Placements are added into one accumulator, so at most two joint arrays
        are alive at a time.
        """
        total = np.zeros((self.noise.cutoff + 2,) * N)
        for modes in combinations(range(N), k):
            total += self.pattern(N, modes).probs
        total /= math.comb(N, k)
        return ModePatternDistribution(probs=total, N=N)


def detection_bias_conditional(N: int, k: int, nbar: float, cutoff: int) -> float:
    """Bias eps_k against the uniform mixture of k-signal placements."""
    _check_caps(N, cutoff)
    if not 0 <= k <= N:
        raise DomainError(f"k must be in [0, {N}], got {k}")
    if k == 0:
        return 0.0
    pair = _ModePair(nbar, cutoff)
    return 0.5 * tv_distance(pair.pattern(N, ()), pair.placement_mixture(N, k))


def detection_bias_exact(N: int, nbar: float, cutoff: int) -> float:
    """Bias of the block protocol: exactly one signal, uniformly placed."""
    return detection_bias_conditional(N, 1, nbar, cutoff)


def detection_bias_iid(N: int, q: float, nbar: float, cutoff: int) -> float:
    """Bias of the protocol that signals in each mode independently with probability q."""
    _check_caps(N, cutoff)
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"q must be in [0, 1], got {q}")
    pair = _ModePair(nbar, cutoff)
    noise = pair.noise.saturated()
    mixed = (1.0 - q) * noise + q * pair.signal.saturated()
    rho = ModePatternDistribution.product([noise] * N)
    sigma = ModePatternDistribution.product([mixed] * N)
    return 0.5 * tv_distance(rho, sigma)


def epsilon_table(N: int, nbar: float, cutoff: int) -> list[float]:
    """eps_0 .. eps_N by enumeration."""
    return [detection_bias_conditional(N, k, nbar, cutoff) for k in range(N + 1)]


def click_count_bias(N: int, k: int, nbar: float) -> float:
    """eps_k in closed form.

    The likelihood ratio between the k-signal mixture and pure noise depends
    only on the number K of modes that register at least one photon, and K is
    Binomial(N, p_c) under noise.
    """
    if N < 1 or not 0 <= k <= N:
        raise DomainError(f"need N >= 1 and 0 <= k <= N, got N={N}, k={k}")
    if k == 0:
        return 0.0
    if nbar == 0.0:
        return 0.5
    p_c = p_click_thermal(nbar)
    clicks = np.arange(N + 1)
    ratio = comb(clicks, k) / (comb(N, k) * p_c**k)
    return float(0.25 * np.sum(binom.pmf(clicks, N, p_c) * np.abs(1.0 - ratio)))


def verify_filter_bound(N: int, q: float, nbar: float, cutoff: int) -> FilterBoundReport:
    """Check eps <= eps_I / (1 - p0) and the decomposition of the i.i.d. state."""
    _check_caps(N, cutoff)
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"q must be in [0, 1], got {q}")
    slack = get_config().bound_slack
    pair = _ModePair(nbar, cutoff)
    rho = pair.pattern(N, ())

    p_k = [float(p) for p in binom.pmf(np.arange(N + 1), N, q)]

    # One sigma_k at a time: bias, then its weighted share of the decomposition
    eps_k = []
    decomposed = np.zeros_like(rho.probs)
    for k in range(N + 1):
        sigma = pair.placement_mixture(N, k)
        eps_k.append(0.5 * tv_distance(rho, sigma))
        decomposed += p_k[k] * sigma.probs
        del sigma

    noise = pair.noise.saturated()
    mixed = (1.0 - q) * noise + q * pair.signal.saturated()
    sigma_iid = ModePatternDistribution.product([mixed] * N)
    state_residual = float(np.max(np.abs(sigma_iid.probs - decomposed)))
    del decomposed

    eps = eps_k[1]
    eps_iid = 0.5 * tv_distance(rho, sigma_iid)
    p0 = (1.0 - q) ** N
    mixture_bias = float(np.dot(p_k, eps_k))

    iid_sqrt_bound = None
    iid_sqrt_bound_holds = None
    if 0.0 < nbar <= 0.1:
        iid_sqrt_bound = q * N / (4.0 * math.sqrt(2.0 * N * nbar))
        iid_sqrt_bound_holds = eps_iid <= iid_sqrt_bound + slack

    report = FilterBoundReport(
        N=N,
        q=q,
        nbar=nbar,
        cutoff=cutoff,
        eps=eps,
        eps_iid=eps_iid,
        p0=p0,
        eps_iid_filtered=eps_iid / (1.0 - p0) if p0 < 1.0 else None,
        bound_holds=eps * (1.0 - p0) <= eps_iid + slack,
        eps_k=eps_k,
        p_k=p_k,
        mixture_bias=mixture_bias,
        bias_gap=mixture_bias - eps_iid,
        state_residual=state_residual,
        eps_k_monotone=bool(np.all(np.diff(eps_k) >= -slack)),
        iid_sqrt_bound=iid_sqrt_bound,
        iid_sqrt_bound_holds=iid_sqrt_bound_holds,
        tail_mass=pair.tail_mass,
        truncation_dirty=pair.truncation_dirty,
    )
    if not report.bound_holds:
        logger.warning(f"Filter bound violated at N={N}, q={q:g}, nbar={nbar:g}")
    return report


def verify_secrecy_bound(
    N: int,
    nbar: float,
    messages: int,
    cutoff: int,
    prior: Optional[Sequence[float]] = None,
) -> SecrecyBoundReport:
    """Distance between message-tagged states against 2 max_m eps_m.

    Message m places the single signal in mode m. The prior defaults to
    uniform over the messages.
    """
    _check_caps(N, cutoff)
    if not 1 <= messages <= N:
        raise DomainError(f"messages must be in [1, {N}], got {messages}")
    weights = np.full(messages, 1.0 / messages) if prior is None else np.asarray(prior, float)
    if weights.shape != (messages,) or np.any(weights < 0.0):
        raise DomainError(f"prior must be {messages} nonnegative weights")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise DomainError(f"prior must sum to 1, got {weights.sum():.12g}")

    pair = _ModePair(nbar, cutoff)
    rho = pair.pattern(N, ()).probs
    # The message tag splits the joint arrays into disjoint blocks, one per
    # message, so their distance is summed block by block
    eps_m = []
    lhs = 0.0
    for m, weight in enumerate(weights):
        sigma = pair.pattern(N, (m,)).probs
        eps_m.append(0.5 * tv_distance(rho, sigma))
        lhs += tv_distance(weight * rho, weight * sigma)
    rhs = 2.0 * max(eps_m)

    return SecrecyBoundReport(
        N=N,
        nbar=nbar,
        messages=messages,
        cutoff=cutoff,
        prior=[float(w) for w in weights],
        eps_m=eps_m,
        lhs=lhs,
        rhs=rhs,
        holds=lhs <= rhs + get_config().bound_slack,
    )
