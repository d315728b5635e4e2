"""Command-line entry point: run the verdict suite on a built-in model,
serialize reports, and emit gnuplot-ready data files.

Exit codes: 0 all selected tests pass (or are skip verdicts), 1 at least
one test failed, 2 configuration error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import platform
import sys
from dataclasses import dataclass, field

import numpy as np
import scipy

from . import checks, hilbert, levy, manifold as mf, models, spde
from .checks import TestReport
from .errors import ConfigError, LevyflatError, NumericalError

try:
    import tomllib
except ModuleNotFoundError:  # python 3.10
    import tomli as tomllib

ALL_TESTS = ("tangency", "jump-closure", "path-invariance", "flatness", "decompose")

_NUMERIC_KEYS = {"dt": 1e-3, "T": 1.0, "n_paths": 100, "radius": 0.1,
                 "n_samples": 32, "tol": 1e-8, "eps_min": 1e-6, "n_check": 20}
_THRESHOLD_KEYS = {"tangency": 1e-8, "jump_closure": 1e-6,
                   "path_invariance": 1e-2, "decompose": 1e-8}


@dataclass
class RunConfig:
    model: str = "hjmm-vasicek"
    tests: tuple[str, ...] = ALL_TESTS
    seed: int = 0
    output_dir: str = "out"
    params: dict = field(default_factory=dict)
    numerics: dict = field(default_factory=lambda: dict(_NUMERIC_KEYS))
    thresholds: dict = field(default_factory=lambda: dict(_THRESHOLD_KEYS))

    def validate(self) -> None:
        if self.model not in models.MODEL_NAMES:
            raise ConfigError(f"unknown model: {self.model}")
        for t in self.tests:
            if t not in ALL_TESTS:
                raise ConfigError(f"unknown test: {t}")
        if not self.tests:
            raise ConfigError("test selection is empty")
        for key in ("dt", "T", "radius", "tol", "eps_min"):
            if self.numerics[key] <= 0.0:
                raise ConfigError(f"numerics.{key} must be positive")
        for key in ("n_paths", "n_samples", "n_check"):
            if int(self.numerics[key]) < 1:
                raise ConfigError(f"numerics.{key} must be >= 1")
        for key, value in self.thresholds.items():
            if value <= 0.0:
                raise ConfigError(f"thresholds.{key} must be positive")


def _merge_table(defaults: dict, table: dict, label: str) -> dict:
    out = dict(defaults)
    for key, value in table.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key: {label}.{key}")
        out[key] = value
    return out


def load_config(path: str | None, overrides: dict) -> RunConfig:
    """Strict config loading: TOML or JSON file, unknown keys rejected,
    command-line overrides applied last."""
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = fh.read()
        except OSError as err:
            raise ConfigError(f"cannot read config file: {err}") from err
        try:
            data = json.loads(raw) if path.endswith(".json") else tomllib.loads(
                raw.decode("utf-8"))
        except (json.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as err:
            raise ConfigError(f"cannot parse config file: {err}") from err
    known_top = {"model", "tests", "seed", "output_dir", "params", "numerics",
                 "thresholds"}
    for key in data:
        if key not in known_top:
            raise ConfigError(f"unknown config key: {key}")
    cfg = RunConfig()
    cfg.model = data.get("model", cfg.model)
    if "tests" in data:
        cfg.tests = _expand_tests(data["tests"])
    cfg.seed = int(data.get("seed", os.environ.get("LEVYFLAT_SEED", cfg.seed)))
    cfg.output_dir = data.get("output_dir", cfg.output_dir)
    cfg.params = dict(data.get("params", {}))
    cfg.numerics = _merge_table(_NUMERIC_KEYS, data.get("numerics", {}), "numerics")
    cfg.thresholds = _merge_table(_THRESHOLD_KEYS, data.get("thresholds", {}),
                                  "thresholds")
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _expand_tests(selection) -> tuple[str, ...]:
    if isinstance(selection, str):
        selection = [s.strip() for s in selection.split(",") if s.strip()]
    out: list[str] = []
    for t in selection:
        if t == "all":
            out.extend(ALL_TESTS)
        else:
            out.append(t)
    seen = []
    for t in out:
        if t not in seen:
            seen.append(t)
    return tuple(seen)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_safe(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if np.isnan(x):
            return "nan"
        if np.isinf(x):
            return 1e300 if x > 0 else -1e300
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _report_dict(r: TestReport) -> dict:
    return _json_safe({
        "test_name": r.test_name, "samples": r.samples,
        "max_residual": r.max_residual, "threshold": r.threshold,
        "pass": r.passed, "skipped": r.skipped,
        "details": list(r.details), "extras": r.extras,
    })


def _flatness_dict(r: mf.FlatnessReport) -> dict:
    return _json_safe({
        "flatness": r.flatness, "samples_used": r.samples_used,
        "radius": r.radius, "singular_value_gap": r.singular_value_gap,
        "seed": r.seed, "chart_index": r.chart_index,
        "spectrum": r.spectrum, "base_point": r.base_point.values,
    })


def _x_grid_for(spec: levy.JumpMeasureSpec, n: int = 20) -> list[float]:
    if spec.atoms:
        return [float(x) for x, _ in spec.atoms]
    grids = [np.linspace(a, b, max(2, n // len(spec.support)))
             for a, b in spec.support]
    return [float(x) for x in np.concatenate(grids)]


def execute(cfg: RunConfig) -> dict:
    """Run the selected tests and return the full report structure."""
    bundle = models.get_model(cfg.model, cfg.params)
    nm, th = cfg.numerics, cfg.thresholds
    K = levy.small_jump_indices(bundle.problem.driver, nm["eps_min"])
    reports: list[TestReport] = []
    flatness_block = None

    if "tangency" in cfg.tests:
        reports.append(checks.tangency_test(
            bundle.manifold, bundle.problem, K, bundle.tangency_plan,
            threshold=th["tangency"]))
    if "jump-closure" in cfg.tests:
        for k in range(1, bundle.problem.driver.q + 1):
            x_grid = _x_grid_for(bundle.problem.driver.jump_specs[k - 1])
            reports.append(checks.jump_closure_test(
                bundle.manifold, bundle.problem, k, x_grid, bundle.tangency_plan,
                threshold=th["jump_closure"]))
    if "flatness" in cfg.tests:
        d_global, flat_reports = mf.flatness_global(
            bundle.manifold, bundle.flatness_plan, radius=nm["radius"],
            n_samples=int(nm["n_samples"]), tol=nm["tol"], seed=cfg.seed)
        classification = mf.classify(bundle.manifold.dim, d_global).value
        pairs = [(i, i + 1) for i in range(len(flat_reports) - 1)]
        consistent, angles = mf.chain_consistency(
            bundle.manifold, flat_reports, pairs, angle_tol=1e-6)
        angle_to_analytic = None
        if bundle.analytic_common is not None and d_global > 0:
            ref = bundle.analytic_common
            worst = 0.0
            for r in flat_reports:
                if r.common_subspace.dim == ref.dim:
                    worst = max(worst, float(hilbert.principal_angles(
                        r.common_subspace, ref)[-1]))
                else:
                    worst = float(np.pi / 2)
            angle_to_analytic = worst
        flatness_block = {
            "global": d_global,
            "classification": classification,
            "chain_consistent": consistent,
            "chain_angles": angles,
            "angle_to_analytic": angle_to_analytic,
            "reports": [_flatness_dict(r) for r in flat_reports],
        }
        reports.append(checks.flatness_bound_check(
            bundle.manifold, bundle.problem, K, bundle.flatness_plan,
            radius=nm["radius"], n_samples=int(nm["n_samples"]), tol=nm["tol"],
            seed=cfg.seed))
    if "path-invariance" in cfg.tests:
        reports.append(checks.path_invariance_test(
            bundle.manifold, bundle.problem, bundle.starts,
            n_paths=int(nm["n_paths"]), T=nm["T"], dt=nm["dt"],
            threshold=th["path_invariance"], seed=cfg.seed,
            n_check=int(nm["n_check"])))
    if "decompose" in cfg.tests:
        result = mf.decompose(bundle.manifold, bundle.decompose_subspace,
                              bundle.flatness_plan, tol=nm["tol"],
                              shift_extent=bundle.decompose_extent)
        reports.append(checks._report(
            "decompose", len(bundle.flatness_plan), result.max_residual,
            th["decompose"],
            extras={"tangency_defect": result.tangency_defect,
                    "failures": result.failures,
                    "shift_extent": bundle.decompose_extent,
                    "subspace_dim": bundle.decompose_subspace.dim}))

    return {
        "model": cfg.model,
        "config": _json_safe({
            "model": cfg.model, "tests": list(cfg.tests), "seed": cfg.seed,
            "output_dir": cfg.output_dir, "params": cfg.params,
            "numerics": nm, "thresholds": th,
        }),
        "environment": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "platform": platform.platform(),
        },
        "seed": cfg.seed,
        "small_jump_indices": sorted(K),
        "tests": [_report_dict(r) for r in reports],
        "flatness": flatness_block,
    }


def _write_report(report: dict, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    stamped = dict(report)
    stamped["timestamp"] = datetime.datetime.now(
        datetime.timezone.utc).isoformat()
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(stamped, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if report.get("flatness"):
        with open(os.path.join(out_dir, "flatness.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["point_index", "d", "sv_gap"])
            for i, r in enumerate(report["flatness"]["reports"]):
                writer.writerow([i, r["flatness"], r["singular_value_gap"]])


def _write_paths(cfg: RunConfig, bundle: models.ModelBundle, out_dir: str,
                 n_paths: int = 3) -> None:
    nm = cfg.numerics
    for path in range(min(n_paths, int(nm["n_paths"]))):
        ci, y0 = bundle.starts[path % len(bundle.starts)]
        h0 = bundle.manifold.point(y0, ci)
        path_seed = levy.seed_tuple(cfg.seed) + (path,)
        sim = spde.simulate_mild(bundle.problem, h0, nm["T"], nm["dt"], path_seed,
                                 store_stride=max(1, int(nm["T"] / nm["dt"]) // 200))
        fname = os.path.join(out_dir, f"path_{path:03d}.csv")
        with open(fname, "w", newline="") as fh:
            writer = csv.writer(fh)
            n = bundle.problem.space.dim
            writer.writerow(["t", "flag"] + [f"v_{i}" for i in range(n)])
            for t, flag, values in sim.records:
                writer.writerow([f"{t:.12g}", flag] + [f"{v:.17g}" for v in values])


def run(cfg: RunConfig) -> int:
    """Execute the configured tests, write report.json / flatness.csv / path
    CSVs, and map the outcome to an exit code."""
    try:
        report = execute(cfg)
        _write_report(report, cfg.output_dir)
        if "path-invariance" in cfg.tests:
            _write_paths(cfg, models.get_model(cfg.model, cfg.params),
                         cfg.output_dir)
    except ConfigError:
        raise
    except NumericalError as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return 3
    failed = [t for t in report["tests"] if not t["pass"]]
    for t in report["tests"]:
        status = "SKIP" if t["skipped"] else ("PASS" if t["pass"] else "FAIL")
        print(f"{status:4s} {t['test_name']}: max_residual={t['max_residual']:.3e} "
              f"threshold={t['threshold']:.3e}")
    if report["flatness"] is not None:
        print(f"flatness_global={report['flatness']['global']} "
              f"classification={report['flatness']['classification']}")
    return 1 if failed else 0


def emit_plots(report_path: str, out_dir: str) -> int:
    """Write gnuplot-compatible two-column data files from a report."""
    try:
        with open(report_path) as fh:
            report = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        print(f"cannot read report: {err}", file=sys.stderr)
        return 2
    os.makedirs(out_dir, exist_ok=True)
    for test in report.get("tests", []):
        if test["test_name"] == "path-invariance" and test["details"]:
            with open(os.path.join(out_dir, "path_distance.dat"), "w") as fh:
                fh.write("# t distance_to_manifold\n")
                for d in sorted(test["details"], key=lambda d: (d["path"], d["t"])):
                    fh.write(f"{d['t']:.12g} {d['distance']:.12g}\n")
    flatness = report.get("flatness")
    if flatness:
        for i, r in enumerate(flatness["reports"]):
            name = os.path.join(out_dir, f"flatness_spectrum_{i:03d}.dat")
            with open(name, "w") as fh:
                fh.write("# index mean_projector_eigenvalue\n")
                for j, lam in enumerate(r["spectrum"]):
                    fh.write(f"{j} {lam:.12g}\n")
        if flatness.get("chain_angles"):
            with open(os.path.join(out_dir, "principal_angle_chain.dat"), "w") as fh:
                fh.write("# pair_index max_principal_angle\n")
                for j, ang in enumerate(flatness["chain_angles"]):
                    fh.write(f"{j} {ang:.12g}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levyflat",
        description="Numerical flatness and invariance tests for jump-driven SPDE models")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the verdict suite on a model")
    p_run.add_argument("--config", help="TOML or JSON config file")
    p_run.add_argument("--model", choices=models.MODEL_NAMES)
    p_run.add_argument("--tests", help="comma-separated subset or 'all'")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--output-dir")

    p_plots = sub.add_parser("emit-plots", help="write plot data from a report")
    p_plots.add_argument("report", help="path to report.json")
    p_plots.add_argument("--output-dir", default="plots")

    sub.add_parser("list-models", help="list built-in model names")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-models":
        for name in models.MODEL_NAMES:
            print(name)
        return 0
    if args.command == "emit-plots":
        return emit_plots(args.report, args.output_dir)
    try:
        overrides = {"model": args.model, "seed": args.seed,
                     "output_dir": args.output_dir}
        if args.tests is not None:
            overrides["tests"] = _expand_tests(args.tests)
        cfg = load_config(args.config, overrides)
        return run(cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except NumericalError as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
