from pathlib import Path

import pytest

from tecusum.config import load_config, loads_config
from tecusum.fusion import LocalStatistic, RuleKind
from tecusum.metrics import ConfigError, CurveMode
from tecusum.methods import TUNED_ALPHA

ROOT = Path(__file__).resolve().parents[1]

MINIMAL = """
[[methods]]
preset = "SC"
"""


def test_defaults():
    cfg = loads_config(MINIMAL)
    assert cfg.num_sensors == 10 and cfg.runs == 2000 and cfg.seed == 0
    assert cfg.model.mu1 == 0.4 and cfg.calibration.target_arl == 30000
    assert cfg.curve_mode is CurveMode.INCLUDE
    assert cfg.scenario_specs() == []


def test_presets_use_tuned_alpha():
    cfg = loads_config('[[methods]]\npreset = "cSTEC"\n[[methods]]\npreset = "cSC"\nalpha = 0.6\n')
    assert cfg.methods[0].rule.alpha == TUNED_ALPHA["cSTEC"]
    assert cfg.methods[1].rule.alpha == 0.6


@pytest.mark.parametrize("name", ["scenario1.toml", "scenario2.toml"])
def test_shipped_configs_round_trip(name):
    cfg = load_config(ROOT / "configs" / name)
    assert len(cfg.methods) == 6
    assert len(cfg.scenario_specs()) == 12
    again = loads_config(cfg.dumps())
    assert again == cfg


def test_explicit_rules_and_specs_round_trip():
    text = """
seed = 3
num_sensors = 4
[[methods]]
name = "fixed"
rule = "censored-fixed"
statistic = "te-cusum"
c = 5.8
[[methods]]
name = "fma"
rule = "censored-adaptive"
statistic = "fma"
alpha = 0.5
window = 30
[scenario]
specs = [{name = "a", affected = [0, 2], amplitude = 0.5, exposure_len = 20, onset = 50, stagger = 10, horizon = 200}]
"""
    cfg = loads_config(text)
    assert cfg.methods[0].rule.kind is RuleKind.CENSORED_FIXED
    assert cfg.methods[1].rule.statistic is LocalStatistic.FMA
    assert cfg.scenario_specs()[0].affected == (0, 2)
    assert loads_config(cfg.dumps()) == cfg


@pytest.mark.parametrize(
    "text,field",
    [
        ("", "methods"),
        ('bogus = 1\n' + MINIMAL, "bogus"),
        ('runs = "many"\n' + MINIMAL, "runs"),
        ("runs = 0\n" + MINIMAL, "runs"),
        ("[model]\nsigma = -1\n" + MINIMAL, "model"),
        ("[model]\nmu1 = 0.0\n" + MINIMAL, "model"),
        ("[calibration]\nrel_tol = 2.0\n" + MINIMAL, "calibration.rel_tol"),
        ("[calibration]\nmin_intervals = 5\n" + MINIMAL, "calibration.min_intervals"),
        ('[[methods]]\npreset = "XYZ"\n', "methods[0].preset"),
        ('[[methods]]\npreset = "SC"\nalpha = 0.5\n', "methods[0].alpha"),
        ('[[methods]]\nname = "a"\nrule = "sum"\n', "methods[0].statistic"),
        ('[[methods]]\nname = "a"\nrule = "median"\nstatistic = "cusum"\n', "methods[0].rule"),
        ('[[methods]]\nname = "a"\nrule = "censored-adaptive"\nstatistic = "cusum"\n', "methods[0].alpha"),
        ('[[methods]]\nname = "a"\nrule = "censored-adaptive"\nstatistic = "cusum"\nalpha = 1.5\n', "methods[0]"),
        ('[[methods]]\nname = "a"\nrule = "sum"\nstatistic = "fma"\n', "methods[0].window"),
        ('[[methods]]\nname = "a"\nrule = "censored-fixed"\nstatistic = "cusum"\n', "methods[0].c"),
        ('[[methods]]\npreset = "SC"\n[[methods]]\npreset = "SC"\n', "methods"),
        ('[scenario]\npreset = "nope"\n' + MINIMAL, "scenario.preset"),
        ('[scenario]\nspecs = [{name = "a", affected = [0]}]\n' + MINIMAL, "scenario.specs[0].amplitude"),
        ('curve_mode = "both"\n' + MINIMAL, "curve_mode"),
        ("this is not toml", "config"),
    ],
)
def test_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as info:
        loads_config(text)
    assert str(info.value).startswith(field)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/config.toml")


def test_overrides():
    cfg = loads_config(MINIMAL).with_overrides(seed=5, runs=10, output_dir="x")
    assert (cfg.seed, cfg.runs, cfg.output_dir) == (5, 10, "x")
    with pytest.raises(ConfigError):
        loads_config(MINIMAL).with_overrides(runs=0)


def test_method_lookup():
    cfg = loads_config(MINIMAL)
    assert cfg.method("SC").name == "SC"
    with pytest.raises(ConfigError):
        cfg.method("MC")
