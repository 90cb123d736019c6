from __future__ import annotations

import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, computed_field
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.core.errors import ConfigError

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PotentialSettings(_Section):
    """Pseudo-pendulum potential V: plateau half-width, quartic window, depth."""

    L0: float = Field(default=0.2, gt=0.0)
    theta_star: float = Field(default=0.2, gt=0.0)
    rho0: float = Field(default=2.5, gt=2.0)


class BumpSettings(_Section):
    alpha: float = Field(default=2.0, gt=1.0)
    L: float = Field(default=0.1, gt=0.0)
    max_order: int = Field(default=6, ge=0, le=6)
    fd_step: float = Field(default=1e-4, gt=0.0)
    norm_grid: int = Field(default=4096, ge=64)


class PendulumSettings(_Section):
    delta: float = Field(default=0.18, gt=0.0, lt=1.0)
    box_grid: int = Field(default=16, ge=2)
    energy_tolerance: float = Field(default=1e-11, gt=0.0)
    min_steps_per_unit: int = Field(default=64, ge=1)
    max_refinements: int = Field(default=12, ge=0)
    quad_panels: int = Field(default=64, ge=4)
    quad_nodes: int = Field(default=20, ge=4)
    cheb_degree: int = Field(default=16, ge=4)
    max_halvings: int = Field(default=20, ge=0)


class CouplingSettings(_Section):
    sync_tolerance: float = Field(default=1e-12, gt=0.0)
    prediction_tolerance: float = Field(default=1e-9, gt=0.0)


class AssemblySettings(_Section):
    p0: int = Field(default=2, ge=2)
    q_max: int = Field(default=10_000, ge=1)
    C2: Optional[float] = Field(default=None, gt=0.0)
    growth_constant: Optional[float] = None
    mu_alpha_target: float = Field(default=0.05, gt=0.0, lt=1.0)
    box_shrink: float = Field(default=1.0, gt=0.0, le=1.0)
    island_shrink_factor: float = Field(default=0.8, gt=0.0, lt=1.0)
    island_shrink_tries: int = Field(default=6, ge=1)


class SuspensionSettings(_Section):
    grid_angles: int = Field(default=64, ge=8)
    grid_actions: int = Field(default=64, ge=6)
    action_min: float = -0.5
    action_max: float = 0.5
    max_iterations: int = Field(default=100, ge=1)
    fixed_point_tolerance: float = Field(default=1e-12, gt=0.0)
    exactness_tolerance: float = Field(default=1e-6, gt=0.0)
    ramp_alpha: float = Field(default=2.0, gt=1.0)
    ode_rtol: float = Field(default=1e-11, gt=0.0)
    ode_atol: float = Field(default=1e-12, gt=0.0)
    fd_step: float = Field(default=1e-6, gt=0.0)


class LabSettings(_Section):
    seed: int = 20240601
    ensemble_size: int = Field(default=64, ge=1)
    escape_cap: int = Field(default=10_000_000, ge=1)
    island_iterations: int = Field(default=10_000, ge=1)
    island_radial_samples: int = Field(default=64, ge=2)
    island_rays: int = Field(default=8, ge=1)
    eta0: float = Field(default=0.1, gt=0.0, lt=1.0)
    wandering_window: int = Field(default=50, ge=1)
    hausdorff_tolerance: float = Field(default=1e-8, gt=0.0)
    disjoint_factor: float = Field(default=10.0, gt=0.0)
    boundary_samples: int = Field(default=256, ge=8)
    output_dir: str = "runs"


class Settings(BaseSettings):
    """Central configuration for the symplectic lab."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="LAB_",
        env_nested_delimiter="__",
        extra="ignore",
    )

    app_name: str = "Symplectic Wandering Lab"
    environment: str = "development"
    version: str = "0.1.0"
    log_level: str = "INFO"

    # Run ledger
    db_path: str = "lab_runs.db"
    db_echo: bool = False

    potential: PotentialSettings = Field(default_factory=PotentialSettings)
    bumps: BumpSettings = Field(default_factory=BumpSettings)
    pendulum: PendulumSettings = Field(default_factory=PendulumSettings)
    coupling: CouplingSettings = Field(default_factory=CouplingSettings)
    assembly: AssemblySettings = Field(default_factory=AssemblySettings)
    suspension: SuspensionSettings = Field(default_factory=SuspensionSettings)
    lab: LabSettings = Field(default_factory=LabSettings)

    @computed_field
    @property
    def database_url(self) -> str:
        return f"sqlite:///{self.db_path}"


def _dotted(loc: tuple) -> str:
    return ".".join(str(part) for part in loc)


def load_settings(path: Optional[Union[str, Path]] = None, **overrides: object) -> Settings:
    """Build Settings from an optional TOML file; errors name the offending key."""
    data: dict = {}
    if path is not None:
        path = Path(path)
        try:
            with path.open("rb") as handle:
                data = tomllib.load(handle)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: malformed TOML ({exc})") from exc
    data.update(overrides)
    unknown = sorted(set(data) - set(Settings.model_fields))
    if unknown:
        raise ConfigError(f"unknown config key '{unknown[0]}'", key=unknown[0])
    try:
        loaded = Settings(**data)
    except ValidationError as exc:
        first = exc.errors()[0]
        key = _dotted(first.get("loc", ())) or "<root>"
        raise ConfigError(f"invalid config key '{key}': {first.get('msg')}", key=key) from exc
    logger.debug(f"Loaded settings from {path or 'defaults'}")
    return loaded


settings = Settings()


def apply_settings(new: Settings) -> Settings:
    """Copy ``new`` onto the shared instance so modules holding ``settings`` see it."""
    for name in Settings.model_fields:
        setattr(settings, name, getattr(new, name))
    logger.debug("Applied settings override")
    return settings
