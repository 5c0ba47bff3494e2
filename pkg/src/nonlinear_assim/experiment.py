"""Multi-trial filtering experiments over (filter, r, I) grids.

Trial ``j`` draws all of its randomness from ``RngStream(seed, j)``: one
standard-normal observation perturbation (child ``"obs"``) reused across the
noise grid and, by default, across filters, plus one child stream per
(filter, r, I) cell. Trials are independent, so they run on a thread pool;
aggregation always follows trial order, so results do not depend on
scheduling.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .climate_models import (
    Coupled2DParams,
    EBMParams,
    make_coupled_model,
    make_ebm_model,
)
from .core import RngStream, StateSpaceModel, TimeSeries
from .filters import FilterResult, enkf_run, initial_belief, ukf_run, upf_run
from .ingest import SeriesKind, align, anomaly_to_absolute, load_series, stack
from .metrics import TrialMatrix, confidence_band, error_std, nse_per_step, se_per_step
from .unscented import UTParams

FILTERS = ("ukf", "enkf", "upf")
MODELS = ("ebm1d", "coupled2d")
THREADS_ENV = "NONLINEAR_ASSIM_THREADS"
SAMPLE_DATA = {
    "temperature": "temperature_anomaly_synthetic.csv",
    "sealevel": "sea_level_mm_synthetic.csv",
}


def sample_data_path(which: str) -> Path:
    return Path(str(resources.files("nonlinear_assim") / "data" / SAMPLE_DATA[which]))


def _floats(s) -> tuple[float, ...]:
    if isinstance(s, str):
        s = [p for p in s.replace(";", ",").split(",") if p.strip()]
    return tuple(float(v) for v in s)


def _ints(s) -> tuple[int, ...]:
    return tuple(int(v) for v in _floats(s))


def _strs(s) -> tuple[str, ...]:
    if isinstance(s, str):
        s = s.split(",")
    return tuple(p.strip().lower() for p in s if p.strip())


def _opt(conv):
    def parse(s):
        if s is None or (isinstance(s, str) and s.strip() in ("", "none")):
            return None
        return conv(s)

    return parse


def _bool(s) -> bool:
    if isinstance(s, bool):
        return s
    return str(s).strip().lower() in ("1", "true", "yes", "on")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a run; round-trips through INI text."""

    model: str = "ebm1d"
    filters: tuple[str, ...] = FILTERS
    noise_grid: tuple[float, ...] = (0.1, 0.5, 1.0, 5.0, 10.0)
    sample_grid: tuple[int, ...] = (200,)
    trials: int = 100
    seed: int = 0
    selector: str = "both"
    alpha: float = 0.6
    beta: float = 2.0
    kappa: float = 0.0
    process_std: tuple[float, ...] | None = None
    enkf_process_scale: float = 1.0
    resampler: str = "systematic"
    init_variance: float = 1.0
    band_std: float = 2.0
    shared_observations: bool = True
    perturb_y0: bool = False
    data_temperature: str | None = None
    data_sealevel: str | None = None
    baseline: float = 14.0
    paths: int = 1000
    steps: int = 144
    k_min: int = 2
    k_max: int = 20
    max_lag: int | None = None
    out: str = "out"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if not self.filters or any(f not in FILTERS for f in self.filters):
            raise ValueError(f"filters must be a non-empty subset of {FILTERS}")
        if not self.noise_grid or any(r <= 0 for r in self.noise_grid):
            raise ValueError("noise_grid must be non-empty and positive")
        if not self.sample_grid or any(i < 2 for i in self.sample_grid):
            raise ValueError("sample_grid must be non-empty with sizes >= 2")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.selector not in ("both", "temperature", "sealevel"):
            raise ValueError("selector must be both, temperature or sealevel")
        if self.model == "ebm1d" and self.selector == "sealevel":
            raise ValueError("the 1-D model has no sea-level component")
        UTParams(self.alpha, self.beta, self.kappa)

    @property
    def ut(self) -> UTParams:
        return UTParams(self.alpha, self.beta, self.kappa)

    @classmethod
    def from_mapping(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: _PARSERS[k](v) for k, v in d.items()})

    def to_mapping(self) -> dict:
        return dataclasses.asdict(self)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["experiment"] = {k: _fmt(v) for k, v in self.to_mapping().items()}
        lines = []
        for k, v in cp["experiment"].items():
            lines.append(f"{k} = {v}")
        return "[experiment]\n" + "\n".join(lines) + "\n"

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        if "experiment" not in cp:
            raise ValueError("config needs an [experiment] section")
        return cls.from_mapping(dict(cp["experiment"]))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_PARSERS = {
    "model": lambda s: str(s).strip().lower(),
    "filters": _strs,
    "noise_grid": _floats,
    "sample_grid": _ints,
    "trials": int,
    "seed": int,
    "selector": lambda s: str(s).strip().lower(),
    "alpha": float,
    "beta": float,
    "kappa": float,
    "process_std": _opt(_floats),
    "enkf_process_scale": float,
    "resampler": lambda s: str(s).strip().lower(),
    "init_variance": float,
    "band_std": float,
    "shared_observations": _bool,
    "perturb_y0": _bool,
    "data_temperature": _opt(str),
    "data_sealevel": _opt(str),
    "baseline": float,
    "paths": int,
    "steps": int,
    "k_min": int,
    "k_max": int,
    "max_lag": _opt(int),
    "out": str,
}


def load_truth(cfg: ExperimentConfig) -> TimeSeries:
    """Reference series: absolute temperature (1-D) or (anomaly, sea level cm) (2-D)."""
    temp = load_series(cfg.data_temperature or sample_data_path("temperature"), SeriesKind.TEMPERATURE_ANOMALY)
    if cfg.model == "ebm1d":
        return anomaly_to_absolute(temp, cfg.baseline)
    sea = load_series(cfg.data_sealevel or sample_data_path("sealevel"), SeriesKind.SEA_LEVEL_MM)
    return stack(*align(temp, sea))


def build_model(cfg: ExperimentConfig, r: float = 1.0) -> StateSpaceModel:
    if cfg.model == "ebm1d":
        model = make_ebm_model(EBMParams(preindustrial_temp=cfg.baseline), r=r)
    else:
        model = make_coupled_model(Coupled2DParams(), r=r, observe=cfg.selector)
    if cfg.process_std is not None:
        model = model.with_noise(process_std=cfg.process_std)
    return model


def _r_tag(r: float) -> str:
    return f"r={r!r}"


def run_filter(
    name: str,
    model: StateSpaceModel,
    y_obs: TimeSeries,
    I: int | None,
    init,
    rng: RngStream,
    cfg: ExperimentConfig,
) -> FilterResult:
    if name == "ukf":
        return ukf_run(model, y_obs, cfg.ut, init)
    if name == "enkf":
        return enkf_run(model, y_obs, I, init, rng, process_scale=cfg.enkf_process_scale)
    return upf_run(model, y_obs, I, cfg.ut, init, cfg.resampler, rng, warn=False)


def cells(cfg: ExperimentConfig) -> list[tuple[str, float, int | None]]:
    """Grid cells in report order; the UKF has no sample size."""
    out = []
    for f in cfg.filters:
        for r in cfg.noise_grid:
            for I in (None,) if f == "ukf" else cfg.sample_grid:
                out.append((f, r, I))
    return out


def observe(
    truth: TimeSeries, model: StateSpaceModel, z: np.ndarray, r: float, perturb_y0: bool = False
) -> TimeSeries:
    """Noisy measurements ``h(truth) + r z``.

    Row 0 only seeds the prior mean, so it stays noise-free unless ``perturb_y0``.
    """
    noise = r * z
    if not perturb_y0:
        noise[0] = 0.0
    y = model.selector.select(truth.values) + noise
    return TimeSeries(truth.start_year, y, label="observations", meta={"measurement_std": r})


def run_trial(cfg: ExperimentConfig, truth: TimeSeries, j: int) -> dict:
    """One trial of every cell; maps cell -> (N, L) means, or None if diverged."""
    stream = RngStream(cfg.seed, j)
    base = build_model(cfg)
    shape = (len(truth), base.K)
    z_shared = stream.child("obs").normal(shape)
    out = {}
    for f, r, I in cells(cfg):
        model = base.with_noise(measurement_std=r)
        z = z_shared if cfg.shared_observations else stream.child("obs", f).normal(shape)
        y_obs = observe(truth, model, z, r, cfg.perturb_y0)
        init = initial_belief(model, y_obs.values[0], truth.values[0], cfg.init_variance)
        res = run_filter(f, model, y_obs, I, init, stream.child(f, _r_tag(r), I or 0), cfg)
        out[(f, r, I)] = None if res.diverged else res.means
    return out


def thread_count() -> int:
    try:
        cap = int(os.environ.get(THREADS_ENV, "0"))
    except ValueError:
        cap = 0
    n = os.cpu_count() or 1
    return max(1, min(n, cap) if cap > 0 else n)


def _component_names(cfg: ExperimentConfig) -> tuple[str, ...]:
    return ("temperature",) if cfg.model == "ebm1d" else ("temperature", "sealevel")


def _summarize(est: np.ndarray, truth: np.ndarray, band_std: float) -> dict:
    t = TrialMatrix(est, truth)
    se = se_per_step(t)
    nse = nse_per_step(t)
    s = {
        "mse": float(np.mean(se)),
        "nmse": float(np.mean(nse)),
        "trial_mse": np.mean(t.errors**2, axis=1).tolist(),
        "se": se.tolist(),
        "nse": nse.tolist(),
        "error_std": None,
        "band": None,
    }
    if t.M >= 2:
        s["error_std"] = error_std(t)
        mean, lo, hi = confidence_band(t, band_std)
        s["band"] = {"mean": mean.tolist(), "lower": lo.tolist(), "upper": hi.tolist()}
    return s


@dataclass
class ExperimentReport:
    """Aggregates per grid cell; serializes to deterministic JSON.

    Metrics are computed over the filtered steps, i.e. every row after the
    initial belief.
    """

    config: dict
    years: list
    truth: dict
    cells: list
    seeds: list
    version: str = __version__
    wall_clock: float | None = field(default=None, compare=False)

    def to_json(self) -> str:
        d = {
            "version": self.version,
            "config": self.config,
            "years": self.years,
            "truth": self.truth,
            "cells": self.cells,
            "seeds": self.seeds,
        }
        return json.dumps(d, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        d = json.loads(text)
        return cls(d["config"], d["years"], d["truth"], d["cells"], d["seeds"], d["version"])

    def cell(self, filter: str, r: float, I: int | None = None) -> dict:
        for c in self.cells:
            if c["filter"] == filter and c["r"] == r and (filter == "ukf" or c["I"] == I):
                return c
        raise KeyError((filter, r, I))

    def metric(self, filter: str, r: float, I: int | None = None, name: str = "mse",
               component: str = "temperature"):
        return self.cell(filter, r, I)["components"][component][name]

    def consistency_errors(self, tol: float = 1e-12) -> list[str]:
        """Aggregates that disagree with the stored per-trial/per-step data."""
        bad = []
        for c in self.cells:
            for comp, s in c["components"].items():
                if s is None:
                    continue
                tag = f"{c['filter']} r={c['r']} I={c['I']} {comp}"
                for name, ref in (
                    ("mse", np.mean(s["se"])),
                    ("mse", np.mean(s["trial_mse"])),
                    ("nmse", np.mean(s["nse"])),
                ):
                    if abs(s[name] - ref) > tol * max(1.0, abs(ref)):
                        bad.append(f"{tag}: {name}")
        return bad


def run_experiment(cfg: ExperimentConfig, truth: TimeSeries | None = None) -> ExperimentReport:
    if truth is None:
        truth = load_truth(cfg)
    workers = min(thread_count(), cfg.trials)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda j: run_trial(cfg, truth, j), range(cfg.trials)))
    else:
        results = [run_trial(cfg, truth, j) for j in range(cfg.trials)]

    names = _component_names(cfg)
    ref = truth.values[1:]
    report_cells = []
    for key in cells(cfg):
        f, r, I = key
        ok = [res[key] for res in results if res[key] is not None]
        comps = {}
        for c, name in enumerate(names):
            if ok:
                est = np.stack([m[1:, c] for m in ok])
                comps[name] = _summarize(est, ref[:, c], cfg.band_std)
            else:
                comps[name] = None
        report_cells.append({
            "filter": f,
            "r": r,
            "I": I,
            "trials_ok": len(ok),
            "divergences": cfg.trials - len(ok),
            "components": comps,
        })
    return ExperimentReport(
        config=cfg.to_mapping(),
        years=truth.years[1:].tolist(),
        truth={n: ref[:, c].tolist() for c, n in enumerate(names)},
        cells=report_cells,
        seeds=[{"trial": j, "seed": cfg.seed, "stream_id": j} for j in range(cfg.trials)],
    )


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(v):
    return "" if v is None else repr(v)


def write_report(report: ExperimentReport, out: Path) -> list[Path]:
    """Write report.json, summary/table CSVs and per-cell band CSVs."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "report.json"]
    written[0].write_text(report.to_json(), encoding="utf-8")

    rows = []
    for c in report.cells:
        for comp, s in c["components"].items():
            rows.append([
                c["filter"], _num(c["r"]), _num(c["I"]), comp, c["trials_ok"], c["divergences"],
                _num(s and s["mse"]), _num(s and s["nmse"]), _num(s and s["error_std"]),
            ])
    p = out / "summary.csv"
    _write_csv(p, ["filter", "r", "I", "component", "trials_ok", "divergences", "mse", "nmse", "error_std"], rows)
    written.append(p)

    filters = list(dict.fromkeys(c["filter"] for c in report.cells))
    comps = list(report.truth)
    grid_r = report.config["noise_grid"]
    grid_i = report.config["sample_grid"]
    for metric in ("mse", "nmse", "error_std"):
        rows = []
        for comp in comps:
            for r in grid_r:
                for I in grid_i:
                    row = [_num(r), I, comp]
                    for f in filters:
                        s = report.cell(f, r, I)["components"][comp]
                        row.append(_num(s and s[metric]))
                    rows.append(row)
        p = out / f"table_{metric}.csv"
        _write_csv(p, ["r", "I", "component", *filters], rows)
        written.append(p)

    for c in report.cells:
        header, cols = ["year"], [report.years]
        for comp, s in c["components"].items():
            if s is None or s["band"] is None:
                continue
            header += [f"{comp}_{k}" for k in ("truth", "mean", "lower", "upper", "se", "nse")]
            b = s["band"]
            cols += [report.truth[comp], b["mean"], b["lower"], b["upper"], s["se"], s["nse"]]
        if len(cols) == 1:
            continue
        tag = f"{c['filter']}_r{c['r']!r}" + ("" if c["I"] is None else f"_I{c['I']}")
        p = out / "bands" / f"{tag}.csv"
        _write_csv(p, header, [[_num(v) if isinstance(v, float) else v for v in row] for row in zip(*cols)])
        written.append(p)
    return written
