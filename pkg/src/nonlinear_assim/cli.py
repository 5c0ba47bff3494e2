"""Command-line entry point: ``nonlinear-assim <simulate|filter|estimate-noise|experiment>``.

Settings come from built-in defaults, then an optional INI file
(``--config``, section ``[experiment]``), then flags; later sources win.

Exit codes: 0 success, 1 usage/configuration, 2 data, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .climate_models import simulate_ensemble
from .core import RngStream
from .errors import (
    DegenerateData,
    FilterDiverged,
    IngestError,
    NotFactorizable,
    SeriesTooShort,
    SingularRegression,
    WindowTooLarge,
)
from .experiment import (
    ExperimentConfig,
    _r_tag,
    build_model,
    load_truth,
    observe,
    run_experiment,
    run_filter,
    sample_data_path,
    write_report,
)
from .filters import initial_belief
from .ingest import SeriesKind, load_series
from .metrics import histogram_vs_normal, kl_divergence
from .noise_estimation import estimate_process_noise

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
CHECKPOINT_EVERY = 43
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# flag dest -> config field
_OVERRIDES = {
    "seed": "seed",
    "out": "out",
    "model": "model",
    "filters": "filters",
    "noise_grid": "noise_grid",
    "sample_grid": "sample_grid",
    "trials": "trials",
    "selector": "selector",
    "data_temperature": "data_temperature",
    "data_sealevel": "data_sealevel",
    "baseline": "baseline",
    "paths": "paths",
    "steps": "steps",
    "k_min": "k_min",
    "k_max": "k_max",
    "max_lag": "max_lag",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("configuration")
    g.add_argument("--config", type=Path, help="INI file with an [experiment] section")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="output directory")
    g.add_argument("--model", choices=("ebm1d", "coupled2d"))
    g.add_argument("--filters", help="comma-separated subset of ukf,enkf,upf")
    g.add_argument("--noise-grid", help="comma-separated measurement noise std values r")
    g.add_argument("--sample-grid", help="comma-separated ensemble/particle sizes I")
    g.add_argument("--trials", type=int)
    g.add_argument("--selector", choices=("both", "temperature", "sealevel"))
    g.add_argument("--data-temperature", help="year,value CSV of temperature anomalies (degC)")
    g.add_argument("--data-sealevel", help="year,value CSV of sea level (mm)")
    g.add_argument("--baseline", type=float, help="anomaly-to-absolute offset in degC")

    p = _Parser(prog="nonlinear-assim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo trajectories, histograms, KL table")
    s.add_argument("--paths", type=int)
    s.add_argument("--steps", type=int)
    s.add_argument("--bins", type=int, default=30)

    f = sub.add_parser("filter", parents=[common], help="single trial of each requested filter")
    f.add_argument("--no-perturb", action="store_true", help="filter the data without adding noise")

    e = sub.add_parser("estimate-noise", parents=[common], help="moving-average / ADF noise estimate")
    e.add_argument("--series", help="year,value CSV (defaults to the temperature data)")
    e.add_argument("--kind", choices=("temperature", "sealevel"), default="temperature")
    e.add_argument("--k-min", type=int)
    e.add_argument("--k-max", type=int)
    e.add_argument("--max-lag", type=int)

    sub.add_parser("experiment", parents=[common], help="full (filter x r x I) x trials grid")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config is not None:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        cfg = ExperimentConfig.from_ini(text)
    changes = {}
    for dest, key in _OVERRIDES.items():
        v = getattr(args, dest, None)
        if v is not None:
            changes[key] = v
    if not changes:
        return cfg
    merged = {k: v for k, v in cfg.to_mapping().items()}
    merged.update(changes)
    return ExperimentConfig.from_mapping(merged)


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _r(v) -> str:
    return repr(float(v))


def checkpoints(steps: int, every: int = CHECKPOINT_EVERY) -> list[int]:
    idx = list(range(0, steps, every))
    if idx[-1] != steps - 1:
        idx.append(steps - 1)
    return idx


def cmd_simulate(cfg: ExperimentConfig, bins: int = 30) -> list[Path]:
    out = Path(cfg.out)
    model = build_model(cfg)
    if cfg.model == "ebm1d":
        x0, start = np.array([cfg.baseline]), 1850
    else:
        truth = load_truth(cfg)
        x0, start = truth.values[0], truth.start_year
    ens = simulate_ensemble(model, x0, cfg.paths, cfg.steps, RngStream(cfg.seed, 0).child("simulate"), start)
    names = model.state_labels
    written = []
    for c, name in enumerate(names):
        kl_rows = []
        for k in checkpoints(ens.steps):
            year = int(ens.years[k])
            try:
                h = histogram_vs_normal(ens.values[:, k, c], bins)
            except DegenerateData:
                kl_rows.append([year, ""])
                continue
            kl_rows.append([year, _r(kl_divergence(h))])
            p = out / f"hist_{name}_{year}.csv"
            _write_csv(p, ["bin_left", "bin_right", "count", "p", "q"], [
                [_r(h.edges[i]), _r(h.edges[i + 1]), int(h.counts[i]), _r(h.p[i]), _r(h.q[i])]
                for i in range(h.p.size)
            ])
            written.append(p)
        p = out / f"kl_{name}.csv"
        _write_csv(p, ["year", "kl_divergence"], kl_rows)
        written.append(p)

        v = ens.values[:, :, c]
        qs = np.quantile(v, QUANTILES, axis=0)
        std = v.std(axis=0, ddof=1) if ens.n_paths > 1 else np.zeros(ens.steps)
        rows = [
            [int(y), _r(m), _r(s), *(_r(q) for q in qk)]
            for y, m, s, qk in zip(ens.years, v.mean(axis=0), std, qs.T)
        ]
        p = out / f"quantiles_{name}.csv"
        _write_csv(p, ["year", "mean", "std", *(f"q{int(q * 100):02d}" for q in QUANTILES)], rows)
        written.append(p)
    return written


def cmd_filter(cfg: ExperimentConfig, perturb: bool = True) -> tuple[list[Path], list[str]]:
    """Run each filter once (trial 0 streams); returns (files, diverged filter names)."""
    out = Path(cfg.out)
    truth = load_truth(cfg)
    r, I = cfg.noise_grid[0], cfg.sample_grid[0]
    model = build_model(cfg, r)
    stream = RngStream(cfg.seed, 0)
    z = stream.child("obs").normal((len(truth), model.K)) if perturb else np.zeros((len(truth), model.K))
    y_obs = observe(truth, model, z, r, cfg.perturb_y0)
    init = initial_belief(model, y_obs.values[0], truth.values[0], cfg.init_variance)

    labels = model.state_labels
    obs_labels = [labels[i] for i in model.selector.observed_indices]
    p = out / "observations.csv"
    _write_csv(p, ["year", *obs_labels], [[int(y), *map(_r, row)] for y, row in zip(y_obs.years, y_obs.values)])
    written, diverged = [p], []
    for name in cfg.filters:
        size = None if name == "ukf" else I
        res = run_filter(name, model, y_obs, size, init, stream.child(name, _r_tag(r), size or 0), cfg)
        if res.diverged:
            diverged.append(name)
        cols = [[f"{l}_mean" for l in labels], [f"{l}_var" for l in labels]]
        header = ["year", *cols[0], *cols[1]]
        extra = []
        for key, series in res.diagnostics.items():
            series = np.asarray(series)
            if series.ndim == 1 and series.size == len(res):
                header.append(key)
                extra.append(series)
            elif series.ndim == 2:
                header += [f"{key}_{l}" for l in labels]
                extra += list(series.T)
        var = np.diagonal(res.covs, axis1=1, axis2=2)
        rows = []
        for n, year in enumerate(res.years):
            rows.append([int(year), *map(_r, res.means[n]), *map(_r, var[n]), *(_r(e[n]) for e in extra)])
        p = out / f"estimates_{name}.csv"
        _write_csv(p, header, rows)
        written.append(p)
    return written, diverged


def cmd_estimate_noise(cfg: ExperimentConfig, series_path=None, kind: str = "temperature") -> list[Path]:
    out = Path(cfg.out)
    if kind == "temperature":
        path = series_path or cfg.data_temperature or sample_data_path("temperature")
        series = load_series(path, SeriesKind.TEMPERATURE_ANOMALY)
    else:
        path = series_path or cfg.data_sealevel or sample_data_path("sealevel")
        series = load_series(path, SeriesKind.SEA_LEVEL_MM)
    est = estimate_process_noise(series, cfg.k_min, cfg.k_max, cfg.max_lag)
    p1 = out / "pvalues.csv"
    _write_csv(p1, ["window", "p_value"], [[k, _r(p)] for k, p in est.table.items()])
    p2 = out / "residuals.csv"
    res = est.residuals
    _write_csv(p2, ["year", "residual"], [[int(y), _r(v)] for y, v in zip(res.years, res.values[:, 0])])
    p3 = out / "noise_estimate.json"
    summary = dict(est.to_dict(), series=str(path), kind=kind, unit=series.meta.get("unit"))
    p3.write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return [p1, p2, p3]


def cmd_experiment(cfg: ExperimentConfig) -> list[Path]:
    t0 = time.perf_counter()
    report = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    out = Path(cfg.out)
    written = write_report(report, out)
    # timing lives outside report.json so reports stay byte-identical across runs
    p = out / "timing.json"
    p.write_text(json.dumps({"wall_clock_seconds": elapsed}) + "\n", encoding="utf-8")
    (out / "config.ini").write_text(cfg.to_ini(), encoding="utf-8")
    return written + [p, out / "config.ini"]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "simulate":
            files = cmd_simulate(cfg, args.bins)
        elif args.command == "filter":
            files, diverged = cmd_filter(cfg, perturb=not args.no_perturb)
            if diverged:
                print(f"diverged: {', '.join(diverged)}", file=sys.stderr)
                return EXIT_NUMERIC
        elif args.command == "estimate-noise":
            files = cmd_estimate_noise(cfg, args.series, args.kind)
        else:
            files = cmd_experiment(cfg)
    except (IngestError, OSError, DegenerateData, WindowTooLarge, SeriesTooShort) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FilterDiverged, NotFactorizable, SingularRegression, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ValueError) as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for f in files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
