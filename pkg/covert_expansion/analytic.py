"""
Analytic model of secret-key expansion from covert communication.

Alice and Bob split N = M * D modes into M blocks of D modes. The shared key
picks a block (log2 M bits) and the message picks one of its D modes
(log2 D bits). This module evaluates the closed-form quantities of that
scheme for thermal background noise and searches for the block size D that
maximizes the net number of key bits produced per run.

All logarithms are base 2.
"""

import logging
import math
from functools import lru_cache
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator
from scipy.optimize import brentq

from .config import get_config

logger = logging.getLogger(__name__)

# d / (4 sqrt(2) (1 - e^-d)) = 1 at the normalized operating point
FOUR_SQRT2 = 4.0 * math.sqrt(2.0)

# Relative slack on the D * nbar <= alpha_max comparison
_REGIME_RTOL = 1e-12


class DomainError(ValueError):
    """An argument lies outside the domain of an analytic operation."""


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise DomainError(message)


def _within_regime(D: int, nbar: float, alpha_max: float) -> bool:
    return D * nbar <= alpha_max * (1.0 + _REGIME_RTOL)


class ProtocolParams(BaseModel):
    """One protocol configuration.

    ``d`` left unset means the normalized value from :func:`solve_d`.
    ``M`` left unset means the block count is sized from the detection-bias
    target (analysis mode); simulations and sessions set it explicitly.
    """

    model_config = ConfigDict(frozen=True)

    nbar: float = Field(ge=0.0)
    eps: float = Field(gt=0.0, lt=0.5)
    D: int = Field(ge=1)
    M: Optional[int] = Field(default=None, ge=1)
    d: Optional[float] = Field(default=None, gt=0.0)
    alpha_max: float = Field(default_factory=lambda: get_config().alpha_max, gt=0.0, lt=1.0)
    simplified_regime: bool = False

    @model_validator(mode="after")
    def _check_regime(self) -> "ProtocolParams":
        if self.simplified_regime and not _within_regime(self.D, self.nbar, self.alpha_max):
            raise ValueError(
                f"D * nbar = {self.D * self.nbar:g} exceeds alpha_max = {self.alpha_max:g}"
            )
        return self

    @computed_field
    @property
    def N(self) -> Optional[int]:
        return None if self.M is None else self.M * self.D

    @computed_field
    @property
    def d_policy(self) -> str:
        return "normalized" if self.d is None else "fixed"

    @property
    def p_click(self) -> float:
        return p_click_thermal(self.nbar)

    def resolved_d(self) -> float:
        return solve_d() if self.d is None else self.d


class ExpansionAnalysis(BaseModel):
    """Closed-form outputs for one (nbar, eps, d, D) configuration."""

    # Echoed inputs
    nbar: float
    eps: float
    d: float
    d_policy: str
    D: int
    alpha_max: float

    # Model quantities
    beta: float
    p0: float
    p_c: float
    delta: float
    N: float
    M: float
    eps_bound: float

    # Key accounting (bits per run)
    capacity_bits: float
    consumed_bits: float
    produced_bits: float
    net_bits: float

    # Conditions
    regime_ok: bool
    condition_raw: bool
    condition_capacity: bool
    condition_exact: bool
    condition_simplified: bool


class BlockSizeOptimum(BaseModel):
    """Result of the block-size search."""

    D_opt: int
    expanding: bool
    status: str
    candidates_evaluated: int
    analysis: ExpansionAnalysis


def binary_entropy(p: float) -> float:
    """Binary Shannon entropy h(p) in bits, with 0 log 0 = 0."""
    _require(0.0 <= p <= 1.0, f"probability out of range: {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def beta_thermal(d: float, nbar: float) -> float:
    """Square-root-law constant beta = d / (4 sqrt(2 nbar)) for thermal noise."""
    _require(d > 0.0, f"d must be positive, got {d}")
    _require(nbar > 0.0, f"nbar must be positive, got {nbar}")
    return d / (4.0 * math.sqrt(2.0 * nbar))


def p_zero_signals(d: float, N: Optional[float] = None) -> float:
    """Probability that the i.i.d. protocol sends no signal.

    Exact (1 - d/N)^N when N is given, the large-N limit e^-d otherwise.
    """
    _require(d > 0.0, f"d must be positive, got {d}")
    if N is None:
        return math.exp(-d)
    _require(N > 0, f"N must be positive, got {N}")
    _require(d <= N, f"d = {d} exceeds N = {N}")
    if d == N:
        return 0.0
    return math.exp(N * math.log1p(-d / N))


def p_click_thermal(nbar: float) -> float:
    """Probability of at least one thermal photon in a mode: 1 - 1/(1 + nbar)."""
    _require(nbar >= 0.0, f"nbar must be nonnegative, got {nbar}")
    return nbar / (1.0 + nbar)


def block_error_delta(D: int, p_c: float) -> float:
    """Probability of at least one extraneous click among the other D - 1 modes."""
    _require(D >= 1, f"D must be >= 1, got {D}")
    _require(0.0 <= p_c < 1.0, f"p_c must be in [0, 1), got {p_c}")
    if D == 1 or p_c == 0.0:
        return 0.0
    return -math.expm1((D - 1) * math.log1p(-p_c))


def dary_capacity(D: int, delta: float) -> float:
    """Capacity in bits of the D-ary symmetric channel with error probability delta."""
    _require(D >= 2, f"D-ary capacity needs D >= 2, got {D}")
    _require(0.0 <= delta <= 1.0, f"delta must be in [0, 1], got {delta}")
    capacity = math.log2(D) - binary_entropy(delta) - delta * math.log2(D - 1)
    return max(capacity, 0.0)


def required_modes(eps: float, beta: float, p0: float) -> float:
    """Smallest N meeting eps = beta / ((1 - p0) sqrt(N))."""
    _require(eps > 0.0, f"eps must be positive, got {eps}")
    _require(beta > 0.0, f"beta must be positive, got {beta}")
    _require(0.0 <= p0 < 1.0, f"p0 must be in [0, 1), got {p0}")
    return (beta / (eps * (1.0 - p0))) ** 2


def detection_bias_bound(beta: float, p0: float, N: float) -> float:
    """Bound beta / ((1 - p0) sqrt(N)) on the block protocol's detection bias."""
    _require(beta > 0.0, f"beta must be positive, got {beta}")
    _require(0.0 <= p0 < 1.0, f"p0 must be in [0, 1), got {p0}")
    _require(N > 0, f"N must be positive, got {N}")
    return beta / ((1.0 - p0) * math.sqrt(N))


def raw_expansion_condition(D: int, beta: float, eps: float, p0: float) -> bool:
    """D > beta / (eps (1 - p0)): more bits sent than consumed, ignoring errors."""
    return D > beta / (eps * (1.0 - p0))


def thermal_condition(D: int, nbar: float, eps: float, d: float) -> bool:
    """Key-expansion condition for thermal noise with an explicit d."""
    delta = block_error_delta(D, p_click_thermal(nbar))
    ratio = d / (FOUR_SQRT2 * math.sqrt(nbar) * -math.expm1(-d) * eps)
    return (2.0 - delta) * math.log2(D) > 2.0 * math.log2(ratio) + binary_entropy(delta)


def expansion_condition_simplified(
    D: int, nbar: float, eps: float, alpha_max: Optional[float] = None
) -> bool:
    """2 log D > log(1 / (nbar eps^2)), valid when D * nbar << 1.

    A regime violation is logged, the inequality is still evaluated.
    """
    _require(D >= 1, f"D must be >= 1, got {D}")
    _require(nbar > 0.0, f"nbar must be positive, got {nbar}")
    _require(eps > 0.0, f"eps must be positive, got {eps}")
    alpha_max = get_config().alpha_max if alpha_max is None else alpha_max
    if not _within_regime(D, nbar, alpha_max):
        logger.warning(
            f"Simplified condition outside its regime: D*nbar={D * nbar:g} > {alpha_max:g}"
        )
    return 2.0 * math.log2(D) > math.log2(1.0 / (nbar * eps**2))


def approx_net_key(alpha: float, nbar: float, eps: float) -> float:
    """Approximate net bits per run for D = alpha / nbar."""
    _require(0.0 < alpha <= 1.0, f"alpha must be in (0, 1], got {alpha}")
    _require(nbar > 0.0, f"nbar must be positive, got {nbar}")
    _require(eps > 0.0, f"eps must be positive, got {eps}")
    return (
        (1.0 - alpha) * math.log2(1.0 / nbar)
        + (2.0 - alpha) * math.log2(alpha)
        - 2.0 * math.log2(1.0 / eps)
    )


@lru_cache(maxsize=1)
def solve_d() -> float:
    """Positive root of d = 4 sqrt(2) (1 - e^-d)."""
    return float(
        brentq(lambda d: d - FOUR_SQRT2 * -math.expm1(-d), 1.0, 10.0, xtol=1e-13, maxiter=200)
    )


def expansion_condition_exact(params: ProtocolParams) -> ExpansionAnalysis:
    """Evaluate every closed-form quantity and condition for one configuration.

    M is sized from the detection-bias target, so ``params.M`` is ignored.
    """
    return _analyse(params, clamp_blocks=False)


def _analyse(params: ProtocolParams, clamp_blocks: bool) -> ExpansionAnalysis:
    # clamp_blocks: a block larger than the required N is reported as a single block
    _require(params.nbar > 0.0, "analysis needs nbar > 0 (beta diverges without noise)")
    d = params.resolved_d()
    D = params.D

    beta = beta_thermal(d, params.nbar)
    p0 = p_zero_signals(d)
    p_c = p_click_thermal(params.nbar)
    delta = block_error_delta(D, p_c)

    N = required_modes(params.eps, beta, p0)
    if not clamp_blocks:
        _require(D <= N, f"D = {D} exceeds the {N:.6g} modes the target eps requires")
    M = max(N / D, 1.0) if clamp_blocks else N / D

    capacity = dary_capacity(D, delta) if D >= 2 else 0.0
    consumed = math.log2(M)
    produced = capacity
    ratio = beta / (params.eps * (1.0 - p0))

    return ExpansionAnalysis(
        nbar=params.nbar,
        eps=params.eps,
        d=d,
        d_policy=params.d_policy,
        D=D,
        alpha_max=params.alpha_max,
        beta=beta,
        p0=p0,
        p_c=p_c,
        delta=delta,
        N=N,
        M=M,
        eps_bound=detection_bias_bound(beta, p0, N),
        capacity_bits=capacity,
        consumed_bits=consumed,
        produced_bits=produced,
        net_bits=produced - consumed,
        regime_ok=_within_regime(D, params.nbar, params.alpha_max),
        condition_raw=D > ratio,
        condition_capacity=capacity > consumed,
        condition_exact=(2.0 - delta) * math.log2(D) > 2.0 * math.log2(ratio)
        + binary_entropy(delta),
        condition_simplified=expansion_condition_simplified(
            D, params.nbar, params.eps, params.alpha_max
        ),
    )


def _net_bits_grid(D: np.ndarray, p_c: float, log2_modes: float) -> np.ndarray:
    """Vectorized net bits for block sizes D >= 2 (same formulas as the scalar path)."""
    Df = D.astype(np.float64)
    delta = -np.expm1((Df - 1.0) * np.log1p(-p_c))
    inner = (delta > 0.0) & (delta < 1.0)
    safe = np.where(inner, delta, 0.5)
    entropy = np.where(inner, -safe * np.log2(safe) - (1.0 - safe) * np.log2(1.0 - safe), 0.0)
    capacity = np.maximum(np.log2(Df) - entropy - delta * np.log2(Df - 1.0), 0.0)
    return capacity - (log2_modes - np.log2(Df))


def optimize_block_size(
    nbar: float,
    eps: float,
    d: Optional[float] = None,
    alpha_max: Optional[float] = None,
) -> BlockSizeOptimum:
    """Integer D maximizing net bits, subject to D * nbar <= alpha_max and D <= N.

    Candidates are a logarithmic grid over [2, D_max]; the bracket around the
    best grid point is then searched exhaustively. Ties go to the smallest D.
    """
    _require(nbar > 0.0, f"nbar must be positive, got {nbar}")
    _require(0.0 < eps < 0.5, f"eps must be in (0, 1/2), got {eps}")
    config = get_config()
    alpha_max = config.alpha_max if alpha_max is None else alpha_max

    d_value = solve_d() if d is None else d
    beta = beta_thermal(d_value, nbar)
    modes = required_modes(eps, beta, p_zero_signals(d_value))
    D_max = min(math.floor(alpha_max / nbar * (1.0 + _REGIME_RTOL)), math.floor(modes))

    def analyse(D: int, clamp_blocks: bool = False) -> ExpansionAnalysis:
        params = ProtocolParams(nbar=nbar, eps=eps, D=D, d=d, alpha_max=alpha_max)
        return _analyse(params, clamp_blocks)

    if D_max < 2:
        # The target eps may need fewer modes than one block of D = 1 holds
        analysis = analyse(1, clamp_blocks=True)
        logger.warning(
            f"No expanding configuration at nbar={nbar:g}, eps={eps:g}: no block of D >= 2 "
            f"fits D*nbar <= {alpha_max:g} and N = {modes:.6g}"
        )
        return BlockSizeOptimum(
            D_opt=1,
            expanding=False,
            status="no expanding configuration",
            candidates_evaluated=1,
            analysis=analysis,
        )

    p_c = p_click_thermal(nbar)
    log2_modes = math.log2(modes)

    num = max(2, math.ceil(math.log10(D_max / 2.0) * config.grid_points_per_decade) + 1)
    grid = np.unique(np.rint(np.geomspace(2.0, D_max, num)).astype(np.int64))
    values = _net_bits_grid(grid, p_c, log2_modes)
    best = int(np.argmax(values))

    lo = int(grid[max(best - 1, 0)])
    hi = int(grid[min(best + 1, grid.size - 1)])
    window = np.arange(lo, hi + 1, dtype=np.int64)
    refined = _net_bits_grid(window, p_c, log2_modes)
    D_opt = int(window[int(np.argmax(refined))])

    analysis = analyse(D_opt)
    expanding = analysis.net_bits > 0.0
    status = "expanding" if expanding else "no expanding configuration"
    logger.info(
        f"Optimal block size at nbar={nbar:g}, eps={eps:g}: D={D_opt}, "
        f"net={analysis.net_bits:.4f} bits ({status})"
    )
    return BlockSizeOptimum(
        D_opt=D_opt,
        expanding=expanding,
        status=status,
        candidates_evaluated=int(grid.size + window.size),
        analysis=analysis,
    )


def power_of_two_layout(analysis: ExpansionAnalysis) -> tuple[int, int]:
    """Session layout for an analysed configuration.

    Returns the largest power of two D' <= D and the smallest power of two
    M' >= N / D'. M' * D' >= N, so the detection-bias target still holds.
    """
    D2 = 1 << (analysis.D.bit_length() - 1)
    blocks = analysis.N / D2
    M2 = 1 << max(0, math.ceil(math.log2(blocks)))
    return D2, M2
