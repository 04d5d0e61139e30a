"""Configuration schema for diffblocks runs."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .types import CoarseSolver, CompareMode, FluxKind, Scheme


class ResourceLimits(BaseModel):
    """Budget for one run or self-test suite."""

    model_config = ConfigDict(frozen=True)

    timeout_sec: float = Field(default=60.0, description="Wall-clock budget in seconds", gt=0)
    memory_mb: int = Field(default=4096, description="Resident memory budget in MB", gt=0)


class CycleConfig(BaseModel):
    """Multigrid cycle settings."""

    model_config = ConfigDict(frozen=True)

    pre_smooth: int = Field(default=2, description="Jacobi sweeps before coarse correction", ge=0)
    post_smooth: int = Field(default=2, description="Jacobi sweeps after coarse correction", ge=0)
    damping: float = Field(default=2.0 / 3.0, description="Jacobi damping factor", gt=0, le=1)
    levels: int = Field(default=2, description="Number of grid levels", ge=2)
    coarse_solver: CoarseSolver = Field(
        default=CoarseSolver.DIRECT, description="Solver on the coarsest level"
    )
    coarse_sweeps: int = Field(
        default=20, description="Jacobi sweeps when the coarse solver is smoother_only", ge=1
    )


_FSI_KEYS = {"cycle_length"}
_IMPLICIT_KEYS = {"inner_iters", "residual_tol"}
_MULTIGRID_KEYS = {
    "levels", "pre_smooth", "post_smooth", "damping", "coarse_solver", "coarse_sweeps", "tol"
}
_SCHEME_KEYS: dict[Scheme, set[str]] = {
    Scheme.EXPLICIT: {"steps"},
    Scheme.FSI: _FSI_KEYS | {"cycles"},
    Scheme.IMPLICIT: _IMPLICIT_KEYS | {"steps"},
    Scheme.MULTIGRID: _MULTIGRID_KEYS | {"cycles"},
}
_SPECIFIC_KEYS = set().union(*_SCHEME_KEYS.values())


class ExperimentConfig(BaseModel):
    """Everything that determines one run of the harness."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)

    scheme: Scheme | None = Field(default=None, description="Scheme to run")
    compare: CompareMode | None = Field(default=None, description="Named comparison mode")

    flux: FluxKind = Field(default=FluxKind.LINEAR, description="Diffusivity")
    lam: float = Field(default=1.0, alias="lambda", description="Contrast parameter", gt=0)
    model: Literal["perona_malik", "you_kaveh"] | None = Field(
        default=None, description="Named operator model"
    )
    weights: tuple[tuple[int, float], ...] | None = Field(
        default=None, description="Derivative weights (m, alpha_m)"
    )
    h: float = Field(default=1.0, description="Grid spacing", gt=0)
    tau: float | Literal["auto"] = Field(default="auto", description="Time step or 'auto'")

    steps: int | None = Field(default=None, description="Explicit/implicit step count", ge=0)
    cycle_length: int | None = Field(default=None, description="FSI cycle length", ge=1)
    cycles: int | None = Field(default=None, description="FSI or multigrid cycle count", ge=0)
    inner_iters: int | None = Field(default=None, description="Fixed-point iterations", ge=1)
    residual_tol: float | None = Field(default=None, description="Fixed-point tolerance", gt=0)

    levels: int | None = Field(default=None, ge=2)
    pre_smooth: int | None = Field(default=None, ge=0)
    post_smooth: int | None = Field(default=None, ge=0)
    damping: float | None = Field(default=None, gt=0, le=1)
    coarse_solver: CoarseSolver | None = None
    coarse_sweeps: int | None = Field(default=None, ge=1)
    tol: float | None = Field(default=None, description="Multigrid residual tolerance", gt=0)

    input: Path | None = Field(default=None, description="Input signal file")
    signal: Literal["step", "ramp", "sine", "random"] | None = Field(
        default=None, description="Built-in test signal"
    )
    n: int = Field(default=65, description="Samples of a built-in signal", ge=2)
    output: Path | None = Field(default=None, description="Final signal / output directory")
    trajectory: Path | None = Field(default=None, description="Trajectory CSV path")
    seed: int = Field(default=0, description="Seed of the random signal", ge=0)

    @field_validator("weights", mode="before")
    @classmethod
    def _parse_weights(cls, value: Any) -> Any:
        """Accept ``"1:1.0, 2:0.5"`` as well as sequences of pairs."""
        if not isinstance(value, str):
            return value
        pairs = []
        for item in value.replace(";", ",").split(","):
            item = item.strip()
            if not item:
                continue
            order, sep, alpha = item.partition(":")
            if not sep:
                raise ValueError(f"weight {item!r} must look like m:alpha")
            pairs.append((int(order), float(alpha)))
        return tuple(pairs)

    @model_validator(mode="after")
    def _check_consistency(self) -> ExperimentConfig:
        if self.scheme is None and self.compare is None:
            raise ConfigError("either a scheme or a comparison mode is required", "scheme")
        if self.scheme is not None and self.compare is not None:
            raise ConfigError("scheme and compare are mutually exclusive", "compare")
        if self.input is not None and self.signal is not None:
            raise ConfigError("give either an input file or a built-in signal", "signal")
        if self.model is not None and self.weights is not None:
            raise ConfigError("give either a model or explicit weights", "weights")
        if self.scheme is not None:
            allowed = _SCHEME_KEYS[self.scheme]
            for key in sorted(_SPECIFIC_KEYS - allowed):
                if getattr(self, key) is not None:
                    raise ConfigError(
                        f"not a parameter of scheme '{self.scheme.value}'", key
                    )
        return self

    def operator_weights(self) -> tuple[tuple[int, float], ...]:
        if self.weights is not None:
            return self.weights
        from .operators import model_weights

        return model_weights(self.model or "perona_malik")

    def cycle_config(self) -> CycleConfig:
        settings = {
            key: getattr(self, key)
            for key in CycleConfig.model_fields
            if getattr(self, key) is not None
        }
        return CycleConfig(**settings)


def config_keys() -> set[str]:
    """Keys accepted in config files (aliases where defined)."""
    return {field.alias or name for name, field in ExperimentConfig.model_fields.items()}


def validate_config(data: dict[str, Any]) -> ExperimentConfig:
    """Validate raw settings.

    Raises:
        ConfigError: Naming the first offending key
    """
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first["loc"]) or None
        raise ConfigError(first["msg"], key) from e
