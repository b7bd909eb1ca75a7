"""
Configuration management for the covert key-expansion toolkit.

Every value can be overridden with a COVERT_* environment variable.
This module provides centralized configuration with sensible defaults;
nothing here is required, every field falls back to a default.
"""

import logging
import os
from dataclasses import dataclass
from typing import Optional

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Hard ceiling on enumerated joint count patterns (128 MiB per float64 array)
ORACLE_STATE_LIMIT = 2**24


@dataclass
class ToolkitConfig:
    """Configuration for the analysis, oracle, simulation and session layers."""

    # Analytic model
    alpha_max: float  # cap on D * nbar ("D nbar << 1" regime)

    # Fock oracle
    tail_tolerance: float
    oracle_max_modes: int
    oracle_max_cutoff: int
    oracle_max_states: int
    bound_slack: float

    # Optimizer / sweep
    sweep_points: int
    grid_points_per_decade: int

    # Monte Carlo
    campaign_workers: int

    # Logging
    log_level: str

    @classmethod
    def from_env(cls) -> "ToolkitConfig":
        """Load configuration from environment variables.

        The state cap defaults to the full saturating alphabet at the mode and
        cutoff caps, (max_cutoff + 2) ** max_modes, bounded by ORACLE_STATE_LIMIT.
        """
        max_modes = int(os.environ.get("COVERT_ORACLE_MAX_MODES", "8"))
        max_cutoff = int(os.environ.get("COVERT_ORACLE_MAX_CUTOFF", "6"))
        default_states = min((max(max_cutoff, 0) + 2) ** max(max_modes, 0), ORACLE_STATE_LIMIT)
        return cls(
            alpha_max=float(os.environ.get("COVERT_ALPHA_MAX", "0.1")),
            tail_tolerance=float(os.environ.get("COVERT_TAIL_TOLERANCE", "1e-12")),
            oracle_max_modes=max_modes,
            oracle_max_cutoff=max_cutoff,
            oracle_max_states=int(os.environ.get("COVERT_ORACLE_MAX_STATES", str(default_states))),
            bound_slack=float(os.environ.get("COVERT_BOUND_SLACK", "1e-9")),
            sweep_points=int(os.environ.get("COVERT_SWEEP_POINTS", "50")),
            grid_points_per_decade=int(os.environ.get("COVERT_GRID_POINTS_PER_DECADE", "64")),
            campaign_workers=int(os.environ.get("COVERT_CAMPAIGN_WORKERS", "1")),
            log_level=os.environ.get("COVERT_LOG_LEVEL", "WARNING").upper(),
        )

    def validate(self) -> list[str]:
        """Validate configuration and return list of errors."""
        errors = []

        if not 0.0 < self.alpha_max < 1.0:
            errors.append(f"COVERT_ALPHA_MAX ({self.alpha_max}) must be in (0, 1)")

        if not 0.0 < self.tail_tolerance < 1.0:
            errors.append(f"COVERT_TAIL_TOLERANCE ({self.tail_tolerance}) must be in (0, 1)")
        if self.bound_slack < 0.0:
            errors.append(f"COVERT_BOUND_SLACK ({self.bound_slack}) must be >= 0")

        # Enumeration caps
        if self.oracle_max_modes < 1:
            errors.append(f"COVERT_ORACLE_MAX_MODES ({self.oracle_max_modes}) must be >= 1")
        if self.oracle_max_cutoff < 0:
            errors.append(f"COVERT_ORACLE_MAX_CUTOFF ({self.oracle_max_cutoff}) must be >= 0")
        if self.oracle_max_states < 2:
            errors.append(f"COVERT_ORACLE_MAX_STATES ({self.oracle_max_states}) must be >= 2")
        if self.oracle_max_states > ORACLE_STATE_LIMIT:
            errors.append(
                f"COVERT_ORACLE_MAX_STATES ({self.oracle_max_states}) exceeds the hard limit "
                f"of {ORACLE_STATE_LIMIT}"
            )

        if self.sweep_points < 2:
            errors.append(f"COVERT_SWEEP_POINTS ({self.sweep_points}) must be >= 2")
        if self.grid_points_per_decade < 4:
            errors.append(
                f"COVERT_GRID_POINTS_PER_DECADE ({self.grid_points_per_decade}) must be >= 4"
            )

        if self.campaign_workers < 1:
            errors.append(f"COVERT_CAMPAIGN_WORKERS ({self.campaign_workers}) must be >= 1")

        if not isinstance(logging.getLevelName(self.log_level), int):
            errors.append(f"COVERT_LOG_LEVEL ({self.log_level}) is not a logging level")

        return errors


# Global configuration instance
_config: Optional[ToolkitConfig] = None


def get_config() -> ToolkitConfig:
    """Get the global configuration instance."""
    global _config
    if _config is None:
        _config = ToolkitConfig.from_env()
    return _config


def reset_config() -> None:
    """Reset the global configuration (useful for testing)."""
    global _config
    _config = None
