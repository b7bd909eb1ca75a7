"""
Command-line entry point.

Subcommands: analyze, sweep, verify, simulate, session. Reports go to
stdout, logs to stderr.

Exit codes: 0 success, 1 infeasible configuration or failed session,
2 usage or domain error, 3 I/O error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Iterator, Literal, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .analytic import (
    BlockSizeOptimum,
    ProtocolParams,
    expansion_condition_exact,
    optimize_block_size,
    power_of_two_layout,
)
from .coding import RepetitionCode
from .config import LOG_FORMAT, get_config
from .montecarlo import SimulationReport, block_key_bits, run_campaign
from .oracle import FilterBoundReport, SecrecyBoundReport, verify_filter_bound, verify_secrecy_bound
from .protocol import SessionMode, SessionTranscript, session_computational, session_info_theoretic

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_USAGE = 2
EXIT_IO = 3

SWEEP_COLUMNS = [
    "nbar",
    "eps",
    "D_opt",
    "M",
    "N",
    "delta",
    "capacity_bits",
    "consumed_bits",
    "net_bits",
]


class ConfigFileError(ValueError):
    """Malformed session configuration file."""


class SweepSpec(BaseModel):
    """Logarithmic nbar grid crossed with a list of detection-bias targets."""

    nbar_min: float = Field(gt=0.0)
    nbar_max: float = Field(gt=0.0)
    points: int = Field(ge=2)
    eps_list: list[float] = Field(min_length=1)
    d: Optional[float] = Field(default=None, gt=0.0)
    alpha_max: Optional[float] = Field(default=None, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check(self) -> "SweepSpec":
        if not self.nbar_min < self.nbar_max:
            raise ValueError(f"nbar_min ({self.nbar_min}) must be below nbar_max ({self.nbar_max})")
        for eps in self.eps_list:
            if not 0.0 < eps < 0.5:
                raise ValueError(f"eps {eps} must be in (0, 1/2)")
        return self


class VerifyReport(BaseModel):
    filter_bound: FilterBoundReport
    secrecy_bound: SecrecyBoundReport


class SessionConfig(BaseModel):
    """Contents of a session configuration file.

    ``layout = optimized`` takes D and M from the block-size optimizer,
    rounded to powers of two. Key material is given in hex or drawn from the
    session seed when only a bit count is configured.
    """

    model_config = ConfigDict(extra="forbid")

    mode: Optional[SessionMode] = None
    nbar: float = Field(default=0.0, ge=0.0)
    eps: float = Field(default=0.1, gt=0.0, lt=0.5)
    d: Optional[float] = Field(default=None, gt=0.0)
    alpha_max: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    layout: Literal["explicit", "optimized"] = "explicit"
    D: Optional[int] = Field(default=None, ge=1)
    M: Optional[int] = Field(default=None, ge=1)
    runs: int = Field(default=10, ge=0)
    shared_key: Optional[str] = None
    shared_key_bits: Optional[int] = Field(default=None, ge=0)
    k0: Optional[str] = None
    k0_bits: int = Field(default=128, ge=1)
    new_key_bits: int = Field(default=1024, ge=1)
    repetitions: int = Field(default=1, ge=1)
    delta_prng: float = Field(default=0.0, ge=0.0, le=0.5)
    encrypt_payload: bool = False


def parse_config_file(path: Path) -> SessionConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigFileError(f"{path}:{lineno}: missing key")
        if key in values:
            raise ConfigFileError(
                f"{path}:{lineno}: duplicate key {key!r} (first set on line {lines[key]})"
            )
        values[key] = value
        lines[key] = lineno

    try:
        return SessionConfig.model_validate(values)
    except ValidationError as e:
        problems = []
        for error in e.errors():
            key = str(error["loc"][0]) if error["loc"] else ""
            where = f"{path}:{lines[key]}" if key in lines else str(path)
            problems.append(f"{where}: {key}: {error['msg']}")
        raise ConfigFileError("\n".join(problems)) from e


def build_sweep_table(sweep: SweepSpec) -> pd.DataFrame:
    """One optimizer row per (eps, nbar) grid point, eps descending then nbar ascending."""
    grid = np.geomspace(sweep.nbar_min, sweep.nbar_max, sweep.points)
    rows = []
    for eps in sorted(sweep.eps_list, reverse=True):
        for nbar in grid:
            analysis = optimize_block_size(float(nbar), eps, sweep.d, sweep.alpha_max).analysis
            rows.append(
                {
                    "nbar": analysis.nbar,
                    "eps": eps,
                    "D_opt": analysis.D,
                    "M": analysis.M,
                    "N": analysis.N,
                    "delta": analysis.delta,
                    "capacity_bits": analysis.capacity_bits,
                    "consumed_bits": analysis.consumed_bits,
                    "net_bits": analysis.net_bits,
                }
            )
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def _flatten(data: dict[str, Any], prefix: str = "") -> Iterator[tuple[str, str]]:
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, f"{name}.")
        else:
            yield name, json.dumps(value, separators=(",", ":"))


def render(report: BaseModel, fmt: str) -> str:
    """Report as indented JSON or aligned ``key: value`` lines."""
    if fmt == "json":
        return report.model_dump_json(indent=2)
    pairs = list(_flatten(report.model_dump(mode="json")))
    width = max(len(key) for key, _ in pairs)
    return "\n".join(f"{key + ':':<{width + 1}} {value}" for key, value in pairs)


def cmd_analyze(
    nbar: float,
    eps: float,
    d: Optional[float] = None,
    D: Optional[int] = None,
    alpha_max: Optional[float] = None,
) -> BlockSizeOptimum:
    """Analyse a fixed block size, or optimize it when D is omitted."""
    if D is None:
        return optimize_block_size(nbar, eps, d, alpha_max)
    extra = {} if alpha_max is None else {"alpha_max": alpha_max}
    params = ProtocolParams(nbar=nbar, eps=eps, D=D, d=d, **extra)
    analysis = expansion_condition_exact(params)
    expanding = analysis.net_bits > 0.0
    return BlockSizeOptimum(
        D_opt=D,
        expanding=expanding,
        status="expanding" if expanding else "no expanding configuration",
        candidates_evaluated=1,
        analysis=analysis,
    )


def cmd_sweep(sweep: SweepSpec, out: Optional[Path]) -> pd.DataFrame:
    """Write the sweep table as CSV to ``out`` (stdout when None)."""
    table = build_sweep_table(sweep)
    target = sys.stdout if out is None else out
    table.to_csv(target, index=False, float_format="%.9g", lineterminator="\n")
    logger.info(f"Sweep wrote {len(table)} rows to {out or 'stdout'}")
    return table


def cmd_verify(
    N: int,
    nbar: float,
    q: float,
    cutoff: int,
    messages: Optional[int] = None,
    prior: Optional[Sequence[float]] = None,
) -> VerifyReport:
    messages = N if messages is None else messages
    return VerifyReport(
        filter_bound=verify_filter_bound(N, q, nbar, cutoff),
        secrecy_bound=verify_secrecy_bound(N, nbar, messages, cutoff, prior),
    )


def cmd_simulate(
    nbar: float, D: int, M: int, trials: int, seed: int, eps: float = 0.1
) -> SimulationReport:
    params = ProtocolParams(nbar=nbar, eps=eps, D=D, M=M)
    return run_campaign(params, trials, seed)


def _key_bits(hex_key: Optional[str], count: int, rng: np.random.Generator) -> np.ndarray:
    if hex_key is not None:
        try:
            raw = bytes.fromhex(hex_key)
        except ValueError as e:
            raise ConfigFileError(f"key is not valid hex: {hex_key!r}") from e
        return np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
    return rng.integers(0, 2, size=count, dtype=np.uint8)


def session_params(config: SessionConfig) -> ProtocolParams:
    """Resolve the protocol configuration a session file describes."""
    extra = {} if config.alpha_max is None else {"alpha_max": config.alpha_max}
    if config.layout == "optimized":
        optimum = optimize_block_size(config.nbar, config.eps, config.d, config.alpha_max)
        D, M = power_of_two_layout(optimum.analysis)
        logger.info(f"Optimized layout at nbar={config.nbar:g}: D={D}, M={M}")
    else:
        if config.D is None or config.M is None:
            raise ConfigFileError("explicit layout needs both D and M")
        D, M = config.D, config.M
    return ProtocolParams(nbar=config.nbar, eps=config.eps, D=D, M=M, d=config.d, **extra)


def cmd_session(mode: Optional[SessionMode], config_path: Path, seed: int) -> SessionTranscript:
    config = parse_config_file(config_path)
    mode = mode or config.mode
    if mode is None:
        raise ConfigFileError(f"{config_path}: no session mode given (flag or 'mode' key)")
    params = session_params(config)
    key_rng = np.random.default_rng([seed, 1])

    if mode == "info-theoretic":
        count = config.shared_key_bits
        if count is None:
            count = config.runs * block_key_bits(params.M)
        key = _key_bits(config.shared_key, count, key_rng)
        return session_info_theoretic(params, config.runs, key, seed)

    k0 = _key_bits(config.k0, config.k0_bits, key_rng)
    return session_computational(
        params,
        k0,
        config.new_key_bits,
        RepetitionCode(params.D, config.repetitions),
        seed,
        delta_prng=config.delta_prng,
        encrypt_payload=config.encrypt_payload,
    )


def _floats(text: str) -> list[float]:
    return [float(item) for item in text.split(",") if item.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="covert-expansion", description="Secret-key expansion from covert communication."
    )
    p.add_argument("--log-level", default=None, help="Logging level (default COVERT_LOG_LEVEL).")
    sub = p.add_subparsers(dest="command", required=True)

    def with_format(parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--format", choices=["text", "json"], default="text")

    a = sub.add_parser("analyze", help="Evaluate or optimize one configuration.")
    a.add_argument("--nbar", type=float, required=True)
    a.add_argument("--eps", type=float, required=True)
    a.add_argument("--d", type=float, default=None, help="Fixed d (default: normalized).")
    a.add_argument("--D", type=int, default=None, help="Block size (default: optimized).")
    a.add_argument("--alpha-max", type=float, default=None)
    with_format(a)
    a.set_defaults(handler=_run_analyze)

    s = sub.add_parser("sweep", help="Optimal net bits over a log-spaced nbar grid, as CSV.")
    s.add_argument("--nbar-min", type=float, default=1e-7)
    s.add_argument("--nbar-max", type=float, default=1e-1)
    s.add_argument("--points", type=int, default=None)
    s.add_argument("--eps", type=_floats, default=[0.1, 0.01, 0.001], help="Comma-separated.")
    s.add_argument("--d", type=float, default=None)
    s.add_argument("--alpha-max", type=float, default=None)
    s.add_argument("--out", type=Path, default=None, help="CSV path (default stdout).")
    s.set_defaults(handler=_run_sweep)

    v = sub.add_parser("verify", help="Exact detection-bias and secrecy checks on small N.")
    v.add_argument("--N", type=int, default=4)
    v.add_argument("--nbar", type=float, default=0.5)
    v.add_argument("--q", type=float, default=0.25)
    v.add_argument("--cutoff", type=int, default=6)
    v.add_argument("--messages", type=int, default=None)
    v.add_argument("--prior", type=_floats, default=None, help="Comma-separated p(m).")
    with_format(v)
    v.set_defaults(handler=_run_verify)

    m = sub.add_parser("simulate", help="Monte Carlo collision and symbol-error rates.")
    noise = m.add_mutually_exclusive_group()
    noise.add_argument("--nbar", type=float, default=None)
    noise.add_argument("--pc", type=float, default=None, help="Click probability instead of nbar.")
    m.add_argument("--D", type=int, required=True)
    m.add_argument("--M", type=int, default=1)
    m.add_argument("--eps", type=float, default=0.1)
    m.add_argument("--trials", type=int, default=100_000)
    m.add_argument("--seed", type=int, default=0)
    with_format(m)
    m.set_defaults(handler=_run_simulate)

    e = sub.add_parser("session", help="Run a key-expansion session from a config file.")
    e.add_argument("--mode", choices=["info-theoretic", "computational"], default=None)
    e.add_argument("--config", type=Path, required=True)
    e.add_argument("--seed", type=int, default=0)
    with_format(e)
    e.set_defaults(handler=_run_session)

    return p


def _run_analyze(args: argparse.Namespace) -> int:
    result = cmd_analyze(args.nbar, args.eps, args.d, args.D, args.alpha_max)
    print(render(result, args.format))
    return EXIT_OK if result.expanding else EXIT_INFEASIBLE


def _run_sweep(args: argparse.Namespace) -> int:
    sweep = SweepSpec(
        nbar_min=args.nbar_min,
        nbar_max=args.nbar_max,
        points=args.points or get_config().sweep_points,
        eps_list=args.eps,
        d=args.d,
        alpha_max=args.alpha_max,
    )
    cmd_sweep(sweep, args.out)
    return EXIT_OK


def _run_verify(args: argparse.Namespace) -> int:
    report = cmd_verify(args.N, args.nbar, args.q, args.cutoff, args.messages, args.prior)
    print(render(report, args.format))
    holds = report.filter_bound.bound_holds and report.secrecy_bound.holds
    return EXIT_OK if holds else EXIT_INFEASIBLE


def _run_simulate(args: argparse.Namespace) -> int:
    if args.pc is not None:
        if not 0.0 <= args.pc < 1.0:
            raise ValueError(f"--pc must be in [0, 1), got {args.pc}")
        nbar = args.pc / (1.0 - args.pc)
    else:
        nbar = 0.0 if args.nbar is None else args.nbar
    report = cmd_simulate(nbar, args.D, args.M, args.trials, args.seed, args.eps)
    print(render(report, args.format))
    return EXIT_OK


def _run_session(args: argparse.Namespace) -> int:
    transcript = cmd_session(args.mode, args.config, args.seed)
    print(render(transcript, args.format))
    return EXIT_OK if transcript.status == "success" else EXIT_INFEASIBLE


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    config = get_config()
    errors = config.validate()
    if errors:
        for error in errors:
            print(f"configuration error: {error}", file=sys.stderr)
        return EXIT_USAGE

    level = (args.log_level or config.log_level).upper()
    if not isinstance(logging.getLevelName(level), int):
        print(f"error: unknown log level {level!r}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=level,
        format=LOG_FORMAT,
        stream=sys.stderr,
    )

    try:
        return args.handler(args)
    except ValueError as e:
        logger.warning(f"Invalid request: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
