"""Experiment configuration: TOML files with nested sections.

One file describes one experiment: the chart, the quadrature resolution,
the deformation-field battery for derivative and stationarity checks, the
ellipsoid sweep, the solver parameters and the loss.  Configurations
round-trip exactly through :func:`serialize_config` /
:func:`parse_config`, which is what makes runs reproducible artifacts.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .bregman import AdmmConfig
from .charts import MAX_HARMONIC_DEGREE
from .errors import ConfigError

__all__ = [
    "GridSpec",
    "ChartSpec",
    "FunctionalSelection",
    "EVAL_COLUMNS",
    "BatterySpec",
    "EllipsoidSweepSpec",
    "LossSpec",
    "SolverSpec",
    "ExperimentConfig",
    "parse_config",
    "parse_config_text",
    "serialize_config",
]


@dataclass(frozen=True)
class GridSpec:
    n_theta: int = 64
    n_phi: int = 128


@dataclass(frozen=True)
class ChartSpec:
    kind: str = "sphere"
    radius: float = 1.0
    semi_axes: tuple = (1.0, 1.0, 1.0)
    base_radius: float = 1.0
    terms: tuple = ()  # ((l, m, value), ...)

    @property
    def degree(self) -> int:
        if self.kind == "radial" and self.terms:
            return max(int(t[0]) for t in self.terms)
        return 0


EVAL_COLUMNS = (
    "tv_normal",
    "total_curvature",
    "total_abs_gauss",
    "gauss_bonnet_residual",
    "area",
    "volume",
)


@dataclass(frozen=True)
class FunctionalSelection:
    select: tuple = EVAL_COLUMNS


@dataclass(frozen=True)
class BatterySpec:
    n_fields: int = 4
    degree: int = 4
    eps: tuple = (1e-3, 1e-4, 1e-5)
    radii: tuple = (1.0, 3.0)
    controls: bool = True


@dataclass(frozen=True)
class EllipsoidSweepSpec:
    aspects: tuple = (0.8, 1.0, 1.25)


@dataclass(frozen=True)
class LossSpec:
    kind: str = "none"  # none | area_penalty | volume_penalty
    target: float | str = "initial"
    weight: float = 1.0


@dataclass(frozen=True)
class SolverSpec:
    beta: float = 0.1
    lam: float = 1.0
    shape_steps_per_sweep: int = 2
    step_size: float = 0.5
    line_search: bool = True
    max_sweeps: int = 100
    tol_residual: float = 5e-4
    tol_objective: float = 2e-5
    gradient_metric: str = "sobolev"
    sobolev_order: float = 1.0
    eps_reg: float = 1e-8
    opt_degree: int = 6
    checkpoint_every: int = 0

    def admm_config(self) -> AdmmConfig:
        data = asdict(self)
        data.pop("checkpoint_every")
        return AdmmConfig(**data)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    out: str = "runs/out"
    grid: GridSpec = field(default_factory=GridSpec)
    chart: ChartSpec = field(default_factory=ChartSpec)
    functionals: FunctionalSelection = field(default_factory=FunctionalSelection)
    battery: BatterySpec = field(default_factory=BatterySpec)
    ellipsoids: EllipsoidSweepSpec = field(default_factory=EllipsoidSweepSpec)
    solver: SolverSpec = field(default_factory=SolverSpec)
    loss: LossSpec = field(default_factory=LossSpec)

    def with_overrides(self, out=None, seed=None, resolution=None) -> "ExperimentConfig":
        cfg = self
        if out is not None:
            cfg = replace(cfg, out=str(out))
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if resolution is not None:
            cfg = replace(cfg, grid=GridSpec(*resolution))
        return cfg


def _tuple_of_tuples(rows):
    return tuple(tuple(float(v) for v in row) for row in rows)


def _build(data: dict) -> ExperimentConfig:
    known = {"seed", "out", "grid", "chart", "functionals", "battery", "ellipsoids", "admm", "loss"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config sections/keys: {sorted(unknown)}")

    def section(name, cls, transforms=None):
        raw = dict(data.get(name, {}))
        transforms = transforms or {}
        for key, fn in transforms.items():
            if key in raw:
                raw[key] = fn(raw[key])
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(f"bad [{name}] section: {exc}") from None

    cfg = ExperimentConfig(
        seed=int(data.get("seed", 0)),
        out=str(data.get("out", "runs/out")),
        grid=section("grid", GridSpec),
        chart=section("chart", ChartSpec, {"terms": _tuple_of_tuples, "semi_axes": tuple}),
        functionals=section("functionals", FunctionalSelection, {"select": tuple}),
        battery=section("battery", BatterySpec, {"eps": tuple, "radii": tuple}),
        ellipsoids=section("ellipsoids", EllipsoidSweepSpec, {"aspects": tuple}),
        solver=section("admm", SolverSpec),
        loss=section("loss", LossSpec),
    )
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig):
    if cfg.grid.n_theta < 2 or cfg.grid.n_phi < 4:
        raise ConfigError("grid must have n_theta >= 2 and n_phi >= 4")
    if cfg.chart.kind not in ("sphere", "ellipsoid", "radial"):
        raise ConfigError(f"unknown chart kind {cfg.chart.kind!r}")
    if cfg.loss.kind not in ("none", "area_penalty", "volume_penalty"):
        raise ConfigError(f"unknown loss kind {cfg.loss.kind!r}")
    degree = cfg.chart.degree
    if degree > MAX_HARMONIC_DEGREE:
        raise ConfigError(f"chart harmonic degree {degree} exceeds cap {MAX_HARMONIC_DEGREE}")
    # quadrature exactness floor for the chart's own harmonic content
    if cfg.grid.n_theta < 2 * degree + 2:
        raise ConfigError(
            f"n_theta = {cfg.grid.n_theta} is below the exactness floor "
            f"2L+2 = {2 * degree + 2} for chart degree {degree}"
        )
    try:
        cfg.solver.admm_config()
    except ValueError as exc:
        raise ConfigError(f"bad [admm] section: {exc}") from None
    if isinstance(cfg.loss.target, str) and cfg.loss.target != "initial":
        raise ConfigError("loss target must be a number or the string 'initial'")
    unknown = set(cfg.functionals.select) - set(EVAL_COLUMNS)
    if unknown:
        raise ConfigError(f"unknown functionals selected: {sorted(unknown)}")


def parse_config_text(text: str) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return _build(data)


def parse_config(path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize value {value!r}")


def serialize_config(cfg: ExperimentConfig) -> str:
    """Emit TOML such that parse(serialize(cfg)) == cfg."""
    lines = [f"seed = {_format_value(cfg.seed)}", f"out = {_format_value(cfg.out)}"]
    sections = {
        "grid": asdict(cfg.grid),
        "chart": asdict(cfg.chart),
        "functionals": asdict(cfg.functionals),
        "battery": asdict(cfg.battery),
        "ellipsoids": asdict(cfg.ellipsoids),
        "admm": asdict(cfg.solver),
        "loss": asdict(cfg.loss),
    }
    for name, body in sections.items():
        lines.append("")
        lines.append(f"[{name}]")
        for key, value in body.items():
            lines.append(f"{key} = {_format_value(value)}")
    return "\n".join(lines) + "\n"
