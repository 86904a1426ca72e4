"""Configuration helpers for premreg."""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict

from .errors import DataError
from .pr import HarmonicWeights
from .prem import PremConfig

THREADS_ENV = "PREMREG_THREADS"
CONFIG_NAME = "config.toml"


def _app_config_dir() -> Path:
    """Return the default configuration directory.

    On Windows we prefer %APPDATA%/premreg, otherwise ~/.config/premreg.
    """

    appdata = os.environ.get("APPDATA")
    if appdata:
        return Path(appdata) / "premreg"
    return Path.home() / ".config" / "premreg"


def default_config_path() -> Path:
    return _app_config_dir() / CONFIG_NAME


@dataclass
class FitDefaults:
    grid_size: int = 100
    u_min: float = 1e-5
    n_permutations: int = 25
    tol_delta: float = 1e-4
    max_iterations: int = 200
    seed: int = 0
    level: float = 0.95
    psi0: str = "uniform"

    def prem_config(self, **overrides: Any) -> PremConfig:
        values = {
            "grid_size": self.grid_size,
            "u_min": self.u_min,
            "n_permutations": self.n_permutations,
            "tol_delta": self.tol_delta,
            "max_iterations": self.max_iterations,
            "seed": self.seed,
            "psi0": self.psi0,
            "weight_schedule": HarmonicWeights(),
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return PremConfig(**values)


@dataclass
class RuntimeConfig:
    threads: int | None = None
    out_dir: str = "premreg_out"


@dataclass
class AppConfig:
    fit: FitDefaults = field(default_factory=FitDefaults)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AppConfig":
        unknown = sorted(set(data) - {"fit", "runtime"})
        if unknown:
            raise DataError(f"unknown config sections: {', '.join(unknown)}")
        return cls(
            fit=_build_section(FitDefaults, data.get("fit", {}), "fit"),
            runtime=_build_section(RuntimeConfig, data.get("runtime", {}), "runtime"),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {"fit": asdict(self.fit), "runtime": asdict(self.runtime)}

    def threads(self) -> int | None:
        """Worker count: PREMREG_THREADS wins over the config file."""

        raw = os.environ.get(THREADS_ENV)
        if raw:
            try:
                value = int(raw)
            except ValueError as exc:
                raise DataError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
            if value < 1:
                raise DataError(f"{THREADS_ENV} must be at least 1, got {value}")
            return value
        return self.runtime.threads


def _build_section(cls, values: Dict[str, Any], section: str):
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - allowed)
    if unknown:
        raise DataError(f"unknown keys in [{section}]: {', '.join(unknown)}")
    return cls(**values)


def load_config(path: Path | None = None) -> AppConfig:
    config_path = path or default_config_path()
    if not config_path.exists():
        return AppConfig()
    return AppConfig.from_dict(_parse_toml(config_path.read_text(encoding="utf-8")) or {})


def save_config(config: AppConfig, path: Path | None = None) -> Path:
    config_path = path or default_config_path()
    config_path.parent.mkdir(parents=True, exist_ok=True)
    config_path.write_text(_to_toml(config.to_dict()), encoding="utf-8")
    return config_path


def _parse_toml(raw: str) -> Dict[str, Any]:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib

    try:
        return tomllib.loads(raw)
    except tomllib.TOMLDecodeError as exc:
        raise DataError(f"invalid config file: {exc}") from exc


def _to_toml(data: Dict[str, Any]) -> str:
    """Minimal TOML serializer to avoid extra dependencies."""

    lines: list[str] = []
    for section, values in data.items():
        if lines:
            lines.append("")
        lines.append(f"[{section}]")
        for key, value in values.items():
            if value is None:
                continue
            if isinstance(value, bool):
                lines.append(f"{key} = {'true' if value else 'false'}")
            elif isinstance(value, (int, float)):
                lines.append(f"{key} = {value!r}")
            else:
                lines.append(f"{key} = \"{_escape_basic_string(str(value))}\"")
    return "\n".join(lines) + "\n"


def _escape_basic_string(value: str) -> str:
    """Escape backslashes and quotes for TOML basic strings."""

    return value.replace("\\", "\\\\").replace("\"", "\\\"")
