"""Command line entry point: ``tecusum {calibrate,simulate,detect,report}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import TextIO

from . import __version__
from .calibration import calibrate_threshold, false_alarm_curve, CalibrationError
from .config import ExperimentConfig, load_config, method_to_dict, rule_to_dict
from .fusion import GlobalDetector
from .methods import Method
from .metrics import ConfigError, CurveMode, SpecComparison, compare_methods
from .scenarios import ScenarioSpec, name_key

log = logging.getLogger("tecusum")

SCHEMA_VERSION = 1
CALIBRATION_FILE = "calibration.json"
SUMMARY_FILE = "summary.json"
SPEC_DIR = "specs"
CURVE_DIR = "curves"


class ParseError(ValueError):
    pass


def sub_seed(master: int, *parts: str | int) -> int:
    """Deterministic 63-bit child seed for a named cell of an experiment.

    ``SeedSequence(master, spawn_key=(crc32(part), ...))`` drawn once; string
    parts are hashed with CRC-32 so the mapping is stable across runs.
    """
    import numpy as np

    key = tuple(name_key(p) if isinstance(p, str) else int(p) for p in parts)
    state = np.random.SeedSequence(int(master), spawn_key=key).generate_state(2, np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


def _dump_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _finite(x: float | None):
    if x is None or not math.isfinite(x):
        return None
    return x


# calibrate -----------------------------------------------------------------

def calibrate_method(cfg: ExperimentConfig, m: Method) -> dict:
    cal = cfg.calibration
    seed = sub_seed(cfg.seed, "calibrate", m.name)
    res = calibrate_threshold(
        m, cfg.num_sensors, cal.target_arl, seed, rel_tol=cal.rel_tol, min_intervals=cal.min_intervals
    )
    rec = {
        **method_to_dict(m),
        "threshold": res.threshold,
        "achieved_arl": res.achieved_arl.mean_run_length,
        "standard_error": res.achieved_arl.standard_error,
        "intervals": res.achieved_arl.intervals_observed,
        "iterations": res.iterations,
        "converged": res.converged,
        "seed": seed,
    }
    if cal.fa_runs:
        curve = false_alarm_curve(
            m, res.threshold, cfg.num_sensors, cal.fa_window, cal.fa_runs,
            sub_seed(cfg.seed, "fa-curve", m.name),
        )
        rec["fa_probability_window"] = curve.value_at(m.name, cal.fa_window)
    return rec


def cmd_calibrate(cfg: ExperimentConfig, jobs: int = 1) -> Path:
    out = Path(cfg.output_dir)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            records = list(pool.map(calibrate_method, [cfg] * len(cfg.methods), cfg.methods))
    else:
        records = [calibrate_method(cfg, m) for m in cfg.methods]
    for r in records:
        log.info("%s: h=%.6g ARL=%.1f +- %.1f", r["name"], r["threshold"], r["achieved_arl"], r["standard_error"])
    doc = {
        "schema_version": SCHEMA_VERSION,
        "seed": cfg.seed,
        "num_sensors": cfg.num_sensors,
        "model": {"mu0": cfg.model.mu0, "mu1": cfg.model.mu1, "sigma": cfg.model.sigma},
        "target_arl": cfg.calibration.target_arl,
        "rel_tol": cfg.calibration.rel_tol,
        "min_intervals": cfg.calibration.min_intervals,
        "methods": records,
    }
    path = out / CALIBRATION_FILE
    _dump_json(doc, path)
    return path


def load_thresholds(cfg: ExperimentConfig, path: Path | None = None) -> dict[str, float]:
    path = path or Path(cfg.output_dir) / CALIBRATION_FILE
    if not path.exists():
        raise ConfigError(f"calibration: no record at {path}; run `tecusum calibrate` first")
    doc = json.loads(path.read_text())
    if doc.get("num_sensors") != cfg.num_sensors:
        raise ConfigError("calibration: record was made for a different num_sensors")
    model = doc.get("model", {})
    if (model.get("mu0"), model.get("mu1"), model.get("sigma")) != (cfg.model.mu0, cfg.model.mu1, cfg.model.sigma):
        raise ConfigError("calibration: record was made for a different model")
    by_name = {r["name"]: r for r in doc.get("methods", [])}
    out = {}
    for m in cfg.methods:
        rec = by_name.get(m.name)
        if rec is None:
            raise ConfigError(f"calibration: method {m.name!r} is not calibrated")
        if {k: v for k, v in rec.items() if k in ("rule", "statistic", "alpha", "c", "c_fraction", "window")} != rule_to_dict(m.rule):
            raise ConfigError(f"calibration: method {m.name!r} changed since it was calibrated")
        out[m.name] = float(rec["threshold"])
    return out


# simulate ------------------------------------------------------------------

def _spec_summary(cmp: SpecComparison, mode: CurveMode) -> dict:
    spec = cmp.spec
    runs = len(next(iter(cmp.records.values())))
    methods = {}
    for name in cmp.records:
        d = cmp.delay(name)
        pre = sum(r.pre_change for r in cmp.records[name])
        methods[name] = {
            "threshold": cmp.thresholds[name],
            "rate_end_of_exposure": cmp.rate_at_end_of_exposure(name, CurveMode.INCLUDE),
            "rate_end_of_exposure_excl": cmp.rate_at_end_of_exposure(name, CurveMode.EXCLUDE),
            "mean_delay": None if d is None else d.mean,
            "delay_se": None if d is None else d.standard_error,
            "detecting": 0 if d is None else d.detecting,
            "censored": sum(r.alarm_time is None for r in cmp.records[name]),
            "pre_change_alarms": pre,
            "fa_rate": pre / runs,
        }
    return {
        "spec": spec.to_dict(),
        "runs": runs,
        "mode": mode.value,
        "end_of_exposure_t": spec.exposure_end - spec.exposure_start,
        "methods": methods,
    }


def _simulate_spec(cfg: ExperimentConfig, spec: ScenarioSpec, thresholds: dict[str, float]) -> tuple[str, dict]:
    pairs = [(m, thresholds[m.name]) for m in cfg.methods]
    cmp = compare_methods([spec], pairs, cfg.runs, sub_seed(cfg.seed, "simulate"))[0]
    out = Path(cfg.output_dir)
    curve = cmp.curves(cfg.curve_mode)
    (out / CURVE_DIR).mkdir(parents=True, exist_ok=True)
    curve.to_csv(out / CURVE_DIR / f"{spec.name}.csv")
    summary = _spec_summary(cmp, cfg.curve_mode)
    _dump_json(summary, out / SPEC_DIR / f"{spec.name}.json")
    return spec.name, summary


def cmd_simulate(cfg: ExperimentConfig, jobs: int = 1) -> Path:
    thresholds = load_thresholds(cfg)
    specs = cfg.scenario_specs()
    if not specs:
        raise ConfigError("scenario: no scenario specs configured")
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            done = list(pool.map(_simulate_spec, [cfg] * len(specs), specs, [thresholds] * len(specs)))
    else:
        done = [_simulate_spec(cfg, s, thresholds) for s in specs]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "seed": cfg.seed,
        "runs": cfg.runs,
        "target_arl": cfg.calibration.target_arl,
        "methods": [m.name for m in cfg.methods],
        "specs": dict(done),
    }
    path = Path(cfg.output_dir) / SUMMARY_FILE
    _dump_json(doc, path)
    return path


# detect --------------------------------------------------------------------

def read_rows(fh: TextIO):
    """Yield ``(row_number, header, values)`` from a CSV with a header row."""
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("input is empty (expected a header row)") from None
    width = len(header)
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != width:
            raise ParseError(f"row {lineno}: expected {width} values, got {len(row)}")
        vals = []
        for col, cell in zip(header, row):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"row {lineno}, column {col!r}: not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise ParseError(f"row {lineno}, column {col!r}: non-finite value {cell!r}")
            vals.append(v)
        yield lineno, header, vals


def cmd_detect(
    cfg: ExperimentConfig,
    method_name: str,
    fh: TextIO,
    out: TextIO,
    threshold: float | None = None,
    cyclical: bool = False,
) -> int:
    """Stream CSV rows through a detector; write one JSON line per alarm."""
    m = cfg.method(method_name)
    calibrated = threshold is None
    if calibrated:
        threshold = load_thresholds(cfg)[m.name]
    det: GlobalDetector | None = None
    names: list[str] = []
    n_alarms = 0
    for _, header, vals in read_rows(fh):
        if det is None:
            if calibrated and len(header) != cfg.num_sensors:
                log.warning("input has %d columns, threshold was calibrated for %d", len(header), cfg.num_sensors)
            names = header
            det = GlobalDetector(m.rule, threshold, [m.model] * len(header), cyclical=cyclical)
        res = det.step(vals)
        if res.alarm:
            n_alarms += 1
            rec = {
                "sample": res.n,
                "statistic": res.fused.value,
                "active": [names[i] for i in sorted(res.fused.active_set)],
                "nu_hat": {names[i]: (None if cp is None else cp.nu_hat) for i, cp in enumerate(res.change_points)},
                "method": m.name,
                "rule": rule_to_dict(m.rule),
                "threshold": threshold,
            }
            out.write(json.dumps(rec, sort_keys=True) + "\n")
            if not cyclical:
                break
    return n_alarms


# report --------------------------------------------------------------------

REPORT_COLUMNS = ("spec", "method", "rate_end_of_exposure", "mean_delay", "delay_se", "fa_rate", "status")


def cmd_report(results_dir: Path, out: TextIO) -> dict:
    """Consolidate per-spec summaries into one table (report.csv + report.json)."""
    spec_files = sorted((results_dir / SPEC_DIR).glob("*.json")) if (results_dir / SPEC_DIR).is_dir() else []
    if not spec_files:
        out.write(f"no results in {results_dir}\n")
        return {"status": "no results", "rows": []}
    expected: list[str] = []
    cal_path = results_dir / CALIBRATION_FILE
    if cal_path.exists():
        expected = [r["name"] for r in json.loads(cal_path.read_text()).get("methods", [])]
    rows = []
    for path in spec_files:
        try:
            doc = json.loads(path.read_text())
            methods = doc["methods"]
        except (json.JSONDecodeError, KeyError):
            rows.append({"spec": path.stem, "method": "*", "status": "corrupt"})
            continue
        for name in expected or list(methods):
            cell = methods.get(name)
            if cell is None:
                rows.append({"spec": path.stem, "method": name, "status": "missing"})
                continue
            rows.append({
                "spec": path.stem,
                "method": name,
                "rate_end_of_exposure": cell.get("rate_end_of_exposure"),
                "mean_delay": _finite(cell.get("mean_delay")),
                "delay_se": _finite(cell.get("delay_se")),
                "fa_rate": cell.get("fa_rate"),
                "status": "ok" if cell.get("mean_delay") is not None else "no detections",
            })
    with open(results_dir / "report.csv", "w", newline="") as fh:
        wr = csv.DictWriter(fh, REPORT_COLUMNS, lineterminator="\n")
        wr.writeheader()
        for r in rows:
            wr.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in REPORT_COLUMNS})
    status = "complete" if all(r["status"] in ("ok", "no detections") for r in rows) else "partial"
    report = {"schema_version": SCHEMA_VERSION, "status": status, "rows": rows}
    _dump_json(report, results_dir / "report.json")
    out.write(f"{'spec':<14}{'method':<10}{'rate@EoE':>10}{'delay':>10}{'FA':>8}  status\n")
    for r in rows:
        rate = r.get("rate_end_of_exposure")
        delay = r.get("mean_delay")
        fa = r.get("fa_rate")
        out.write(
            f"{r['spec']:<14}{r['method']:<10}"
            f"{'' if rate is None else f'{rate:.3f}':>10}"
            f"{'' if delay is None else f'{delay:.1f}':>10}"
            f"{'' if fa is None else f'{fa:.3f}':>8}  {r['status']}\n"
        )
    return report


# entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tecusum", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, runs=False, jobs=False):
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
        if runs:
            sp.add_argument("--runs", type=int)
        if jobs:
            sp.add_argument("--jobs", type=int, default=1)

    common(sub.add_parser("calibrate", help="calibrate thresholds to the target ARL2FA"), jobs=True)
    common(sub.add_parser("simulate", help="run the scenario grid with calibrated thresholds"), runs=True, jobs=True)
    d = sub.add_parser("detect", help="apply a calibrated detector to CSV rows")
    common(d)
    d.add_argument("--method", required=True)
    d.add_argument("--input", type=Path, help="CSV file (default: stdin)")
    d.add_argument("--threshold", type=float, help="use this threshold instead of the calibration record")
    d.add_argument("--mode", choices=("oneshot", "cyclical"), default="oneshot")
    r = sub.add_parser("report", help="consolidate simulation results")
    r.add_argument("results_dir", type=Path, nargs="?")
    r.add_argument("--config", type=Path)
    r.add_argument("--out", type=Path)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    logging.getLogger("numba").setLevel(logging.WARNING)
    try:
        if args.command == "report":
            target = args.results_dir or args.out
            if target is None:
                target = Path(load_config(args.config).output_dir) if args.config else Path("results")
            report = cmd_report(target, sys.stdout)
            return 0 if report["status"] != "no results" else 1
        cfg = load_config(args.config).with_overrides(
            seed=args.seed, runs=getattr(args, "runs", None), output_dir=args.out
        )
        if args.command == "calibrate":
            print(cmd_calibrate(cfg, args.jobs))
        elif args.command == "simulate":
            print(cmd_simulate(cfg, args.jobs))
        else:
            cyclical = args.mode == "cyclical"
            if args.input is None:
                cmd_detect(cfg, args.method, sys.stdin, sys.stdout, args.threshold, cyclical)
            else:
                with open(args.input, newline="") as fh:
                    cmd_detect(cfg, args.method, fh, sys.stdout, args.threshold, cyclical)
    except (ConfigError, ParseError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
