"""Experiment configuration: one TOML file drives calibrate, simulate and detect."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import tomli_w

from .fusion import FusionRule, LocalStatistic, RuleKind
from .methods import Method, preset_rule
from .metrics import ConfigError, CurveMode
from .models import GaussianMeanShiftModel
from .scenarios import ScenarioError, ScenarioSpec, scenario_matrix

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["CalibrationSettings", "ConfigError", "ExperimentConfig", "load_config"]


@dataclass(frozen=True)
class CalibrationSettings:
    target_arl: float = 30_000.0
    rel_tol: float = 0.05
    min_intervals: int = 200
    # one-shot false-alarm window reported next to each threshold; 0 runs skips it
    fa_window: int = 1000
    fa_runs: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    model: GaussianMeanShiftModel
    methods: tuple[Method, ...]
    num_sensors: int = 10
    calibration: CalibrationSettings = field(default_factory=CalibrationSettings)
    scenario_preset: str | None = None
    affected_counts: tuple[int, ...] = (3, 5, 7)
    specs: tuple[ScenarioSpec, ...] = ()
    runs: int = 2000
    seed: int = 0
    output_dir: str = "results"
    curve_mode: CurveMode = CurveMode.INCLUDE

    def scenario_specs(self) -> list[ScenarioSpec]:
        if self.scenario_preset is not None:
            return scenario_matrix(self.scenario_preset, self.num_sensors, self.affected_counts)
        return list(self.specs)

    def method(self, name: str) -> Method:
        for m in self.methods:
            if m.name == name:
                return m
        raise ConfigError(f"methods: no method named {name!r}")

    def with_overrides(self, seed=None, runs=None, output_dir=None) -> ExperimentConfig:
        changes: dict[str, Any] = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if runs is not None:
            if runs < 1:
                raise ConfigError("runs: must be >= 1")
            changes["runs"] = int(runs)
        if output_dir is not None:
            changes["output_dir"] = str(output_dir)
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "seed": self.seed,
            "runs": self.runs,
            "num_sensors": self.num_sensors,
            "output_dir": self.output_dir,
            "curve_mode": self.curve_mode.value,
            "model": {"mu0": self.model.mu0, "mu1": self.model.mu1, "sigma": self.model.sigma},
            "calibration": {
                "target_arl": self.calibration.target_arl,
                "rel_tol": self.calibration.rel_tol,
                "min_intervals": self.calibration.min_intervals,
                "fa_window": self.calibration.fa_window,
                "fa_runs": self.calibration.fa_runs,
            },
            "methods": [method_to_dict(m) for m in self.methods],
        }
        if self.scenario_preset is not None:
            d["scenario"] = {"preset": self.scenario_preset, "affected_counts": list(self.affected_counts)}
        else:
            d["scenario"] = {"specs": [s.to_dict() for s in self.specs]}
        return d

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())


def rule_to_dict(rule: FusionRule) -> dict:
    d: dict[str, Any] = {"rule": rule.kind.value, "statistic": rule.statistic.value}
    for key in ("alpha", "c", "c_fraction", "window"):
        val = getattr(rule, key)
        if val is not None:
            d[key] = val
    return d


def method_to_dict(m: Method) -> dict:
    return {"name": m.name, **rule_to_dict(m.rule)}


def _get(table: dict, key: str, where: str, kind, default=None, required=False):
    path = f"{where}.{key}" if where else key
    if key not in table:
        if required:
            raise ConfigError(f"{path}: missing required field")
        return default
    val = table[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind) or isinstance(val, bool):
        raise ConfigError(f"{path}: expected {kind.__name__}, got {type(val).__name__}")
    return val


def _parse_method(table: Any, idx: int, model: GaussianMeanShiftModel) -> Method:
    where = f"methods[{idx}]"
    if not isinstance(table, dict):
        raise ConfigError(f"{where}: expected a table")
    known = {"name", "preset", "rule", "statistic", "alpha", "c", "c_fraction", "window"}
    extra = set(table) - known
    if extra:
        raise ConfigError(f"{where}.{sorted(extra)[0]}: unknown field")
    if "preset" in table:
        preset = _get(table, "preset", where, str)
        if "rule" in table or "statistic" in table:
            raise ConfigError(f"{where}.preset: cannot be combined with rule/statistic")
        try:
            base = preset_rule(preset, _get(table, "alpha", where, float))
        except KeyError as exc:
            raise ConfigError(f"{where}.preset: {exc.args[0]}") from None
        if "alpha" in table and base.kind is not RuleKind.CENSORED_ADAPTIVE:
            raise ConfigError(f"{where}.alpha: preset {preset!r} takes no alpha")
        return Method(_get(table, "name", where, str, preset), base, model)
    name = _get(table, "name", where, str, required=True)
    kind = _get(table, "rule", where, str, required=True)
    stat = _get(table, "statistic", where, str, required=True)
    try:
        kind_e = RuleKind(kind)
    except ValueError:
        raise ConfigError(f"{where}.rule: unknown rule {kind!r}") from None
    try:
        stat_e = LocalStatistic(stat)
    except ValueError:
        raise ConfigError(f"{where}.statistic: unknown statistic {stat!r}") from None
    alpha = _get(table, "alpha", where, float)
    c = _get(table, "c", where, float)
    c_fraction = _get(table, "c_fraction", where, float)
    window = _get(table, "window", where, int)
    if kind_e is RuleKind.CENSORED_ADAPTIVE and alpha is None:
        raise ConfigError(f"{where}.alpha: required for censored-adaptive")
    if kind_e is not RuleKind.CENSORED_ADAPTIVE and alpha is not None:
        raise ConfigError(f"{where}.alpha: only allowed for censored-adaptive")
    if kind_e is RuleKind.CENSORED_FIXED and (c is None) == (c_fraction is None):
        raise ConfigError(f"{where}.c: censored-fixed needs exactly one of c or c_fraction")
    if kind_e is not RuleKind.CENSORED_FIXED and (c is not None or c_fraction is not None):
        raise ConfigError(f"{where}.c: only allowed for censored-fixed")
    if stat_e is LocalStatistic.FMA and window is None:
        raise ConfigError(f"{where}.window: required for the fma statistic")
    if stat_e is not LocalStatistic.FMA and window is not None:
        raise ConfigError(f"{where}.window: only allowed for the fma statistic")
    try:
        rule = FusionRule(kind_e, stat_e, alpha=alpha, c=c, c_fraction=c_fraction, window=window)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return Method(name, rule, model)


def _parse_spec(table: Any, idx: int, num_sensors: int) -> ScenarioSpec:
    where = f"scenario.specs[{idx}]"
    if not isinstance(table, dict):
        raise ConfigError(f"{where}: expected a table")
    try:
        return ScenarioSpec(
            name=_get(table, "name", where, str, required=True),
            num_sensors=_get(table, "num_sensors", where, int, num_sensors),
            affected=tuple(_get(table, "affected", where, list, required=True)),
            amplitude=_get(table, "amplitude", where, float, required=True),
            exposure_len=_get(table, "exposure_len", where, int, required=True),
            onset=_get(table, "onset", where, int, required=True),
            stagger=_get(table, "stagger", where, int, 0),
            horizon=_get(table, "horizon", where, int, 3000),
            sigma=_get(table, "sigma", where, float, 1.0),
        )
    except (ScenarioError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(data: dict) -> ExperimentConfig:
    top = {"seed", "runs", "num_sensors", "output_dir", "curve_mode", "model", "calibration", "methods", "scenario"}
    extra = set(data) - top
    if extra:
        raise ConfigError(f"{sorted(extra)[0]}: unknown field")
    num_sensors = _get(data, "num_sensors", "", int, 10)
    if num_sensors < 1:
        raise ConfigError("num_sensors: must be >= 1")

    mt = _get(data, "model", "", dict, {})
    try:
        model = GaussianMeanShiftModel(
            _get(mt, "mu0", "model", float, 0.0),
            _get(mt, "mu1", "model", float, 0.4),
            _get(mt, "sigma", "model", float, 1.0),
        )
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None

    ct = _get(data, "calibration", "", dict, {})
    cal = CalibrationSettings(
        target_arl=_get(ct, "target_arl", "calibration", float, 30_000.0),
        rel_tol=_get(ct, "rel_tol", "calibration", float, 0.05),
        min_intervals=_get(ct, "min_intervals", "calibration", int, 200),
        fa_window=_get(ct, "fa_window", "calibration", int, 1000),
        fa_runs=_get(ct, "fa_runs", "calibration", int, 0),
    )
    if cal.target_arl <= 0:
        raise ConfigError("calibration.target_arl: must be positive")
    if not 0 < cal.rel_tol < 1:
        raise ConfigError("calibration.rel_tol: must lie in (0, 1)")
    if cal.min_intervals < 30:
        raise ConfigError("calibration.min_intervals: must be >= 30")
    if cal.fa_runs and cal.fa_runs < 100:
        raise ConfigError("calibration.fa_runs: must be 0 or >= 100")

    raw_methods = _get(data, "methods", "", list, required=True)
    if not raw_methods:
        raise ConfigError("methods: at least one method is required")
    methods = tuple(_parse_method(t, i, model) for i, t in enumerate(raw_methods))
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ConfigError("methods: names must be unique")

    st = _get(data, "scenario", "", dict, {})
    preset = _get(st, "preset", "scenario", str)
    counts = tuple(_get(st, "affected_counts", "scenario", list, [3, 5, 7]))
    specs: tuple[ScenarioSpec, ...] = ()
    if preset is not None:
        if "specs" in st:
            raise ConfigError("scenario.specs: cannot be combined with scenario.preset")
        try:
            scenario_matrix(preset, num_sensors, counts)
        except ScenarioError as exc:
            raise ConfigError(f"scenario.preset: {exc}") from None
    else:
        raw_specs = _get(st, "specs", "scenario", list, [])
        specs = tuple(_parse_spec(t, i, num_sensors) for i, t in enumerate(raw_specs))
        for i, s in enumerate(specs):
            if s.num_sensors != num_sensors:
                raise ConfigError(f"scenario.specs[{i}].num_sensors: must equal num_sensors={num_sensors}")

    try:
        mode = CurveMode(_get(data, "curve_mode", "", str, CurveMode.INCLUDE.value))
    except ValueError:
        raise ConfigError("curve_mode: expected include-pre-change or exclude-pre-change") from None
    runs = _get(data, "runs", "", int, 2000)
    if runs < 1:
        raise ConfigError("runs: must be >= 1")
    return ExperimentConfig(
        model=model,
        methods=methods,
        num_sensors=num_sensors,
        calibration=cal,
        scenario_preset=preset,
        affected_counts=counts,
        specs=specs,
        runs=runs,
        seed=_get(data, "seed", "", int, 0),
        output_dir=_get(data, "output_dir", "", str, "results"),
        curve_mode=mode,
    )


def loads_config(text: str) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config: invalid TOML ({exc})") from None
    return parse_config(data)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path} ({exc.strerror})") from None
    return loads_config(text)
