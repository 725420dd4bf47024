"""Scenario configuration files.

A configuration is a small INI document::

    [scenario]
    name = cir
    sigma_source = closed-form

    [params]
    a = 2.0
    b = 1.0

    [grid]
    T = 1.0
    n_steps = 4096

    [ensemble]
    seed = 20240306
    n_paths = 100000

    [xgrid]
    points = auto
    n_points = 25

    [verify]
    confidence = 0.99
    k_min = 10

    [output]
    dir = itoconc-out
    format = table

Every key has a command-line twin; flags win over the file.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional

from .errors import ConfigError
from .simulate import DEFAULT_N_PATHS, DEFAULT_N_STEPS

DEFAULT_SEED = 20240306
SIGMA_SOURCES = ("closed-form", "mc-estimate")
FORMATS = ("table", "structured")


@dataclass
class ScenarioConfig:
    scenario: str
    params: Dict[str, Any] = field(default_factory=dict)
    T: float = 1.0
    n_steps: int = DEFAULT_N_STEPS
    seed: int = DEFAULT_SEED
    n_paths: int = DEFAULT_N_PATHS
    x_grid: Optional[List[float]] = None
    n_points: int = 25
    confidence: float = 0.99
    k_min: int = 10
    sigma_source: str = "closed-form"
    out_dir: str = "itoconc-out"
    fmt: str = "table"

    def validated(self) -> "ScenarioConfig":
        """Check the generic fields and coerce ``params`` through the scenario registry."""
        from .scenarios import get_scenario

        scenario = get_scenario(self.scenario)
        if not self.T > 0:
            raise ConfigError(f"T must be positive, got {self.T}")
        if self.n_steps < 2:
            raise ConfigError(f"n_steps must be >= 2, got {self.n_steps}")
        if self.n_paths < 1:
            raise ConfigError(f"n_paths must be positive, got {self.n_paths}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not 0.5 < self.confidence < 1.0:
            raise ConfigError(f"confidence must lie in (0.5, 1), got {self.confidence}")
        if self.k_min < 1 or self.n_points < 1:
            raise ConfigError("k_min and n_points must be positive")
        if self.sigma_source not in SIGMA_SOURCES:
            raise ConfigError(f"sigma_source must be one of {SIGMA_SOURCES}, got {self.sigma_source!r}")
        if self.fmt not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}, got {self.fmt!r}")
        if self.x_grid is not None and (not self.x_grid or any(x < 0 for x in self.x_grid)):
            raise ConfigError("explicit x grid must be a nonempty list of nonnegative numbers")
        return replace(self, params=scenario.coerce(self.params))

    # -- INI round trip --------------------------------------------------------

    def to_ini(self) -> str:
        from .scenarios import get_scenario

        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["scenario"] = {"name": self.scenario, "sigma_source": self.sigma_source}
        scenario = get_scenario(self.scenario)
        cp["params"] = {k: scenario.format_param(k, v) for k, v in sorted(self.params.items())}
        cp["grid"] = {"T": repr(float(self.T)), "n_steps": str(self.n_steps)}
        cp["ensemble"] = {"seed": str(self.seed), "n_paths": str(self.n_paths)}
        points = "auto" if self.x_grid is None else ", ".join(repr(float(x)) for x in self.x_grid)
        cp["xgrid"] = {"points": points, "n_points": str(self.n_points)}
        cp["verify"] = {"confidence": repr(float(self.confidence)), "k_min": str(self.k_min)}
        cp["output"] = {"dir": self.out_dir, "format": self.fmt}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "ScenarioConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse configuration: {exc}") from exc
        known = {"scenario", "params", "grid", "ensemble", "xgrid", "verify", "output"}
        unknown = set(cp.sections()) - known
        if unknown:
            raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
        if not cp.has_option("scenario", "name"):
            raise ConfigError("missing [scenario] name")

        def get(section, key, conv, default):
            if not cp.has_option(section, key):
                return default
            raw = cp.get(section, key)
            try:
                return conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc

        cfg = cls(scenario=cp.get("scenario", "name").strip())
        cfg.sigma_source = get("scenario", "sigma_source", str.strip, cfg.sigma_source)
        cfg.params = dict(cp["params"]) if cp.has_section("params") else {}
        cfg.T = get("grid", "T", float, cfg.T)
        cfg.n_steps = get("grid", "n_steps", int, cfg.n_steps)
        cfg.seed = get("ensemble", "seed", int, cfg.seed)
        cfg.n_paths = get("ensemble", "n_paths", int, cfg.n_paths)
        cfg.x_grid = get("xgrid", "points", parse_x_grid, None)
        cfg.n_points = get("xgrid", "n_points", int, cfg.n_points)
        cfg.confidence = get("verify", "confidence", float, cfg.confidence)
        cfg.k_min = get("verify", "k_min", int, cfg.k_min)
        cfg.out_dir = get("output", "dir", str.strip, cfg.out_dir)
        cfg.fmt = get("output", "format", str.strip, cfg.fmt)
        return cfg.validated()


def parse_x_grid(text: str) -> Optional[List[float]]:
    text = text.strip()
    if text.lower() == "auto":
        return None
    return [float(tok) for tok in text.replace(",", " ").split()]
