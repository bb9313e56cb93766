"""Benchmark harness: run registration methods over a dataset and score them."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import data
from .errors import ConfigError, Se3DiffRegError
from .metrics import (DEFAULT_ROT_THRESHOLDS_DEG, DEFAULT_TRANS_THRESHOLDS, PoseError,
                      map_summary, pose_error)
from .reverse import MODES, ReverseConfig, run_inference
from .schedule import KINDS, make_schedule, respace
from .surrogate import Kabsch, NoisyOracle, TrimmedICP, single_shot_baseline

log = logging.getLogger(__name__)

METHODS = ("single_shot", "reverse")
SURROGATES = ("kabsch", "icp", "oracle")
ROW_FIELDS = ("pair_id", "method", "repeat", "re_deg", "te", "steps_used", "converged")


@dataclass(frozen=True)
class BenchConfig:
    dataset_dir: str = ""
    surrogate: str = "icp"
    icp_iters: int = 50
    trim: float = 0.1
    oracle_rot_sigma: float = 0.0
    oracle_trans_sigma: float = 0.0
    oracle_scaled: bool = False
    schedule: str = "cosine"
    steps: int = 200
    gamma: float = 0.1
    infer_steps: int = 5
    mode: str = "deterministic"
    seed: int = 0
    repeats: int = 1
    methods: tuple = METHODS
    thresholds_rot: tuple = DEFAULT_ROT_THRESHOLDS_DEG
    thresholds_trans: tuple = DEFAULT_TRANS_THRESHOLDS
    workers: Optional[int] = None
    out_dir: Optional[str] = None

    def surrogate_kind(self):
        if self.surrogate == "kabsch":
            return Kabsch()
        if self.surrogate == "icp":
            return TrimmedICP(max_iters=self.icp_iters, trim_fraction=self.trim)
        if self.surrogate == "oracle":
            return NoisyOracle(self.oracle_rot_sigma, self.oracle_trans_sigma, self.oracle_scaled)
        raise ConfigError(f"unknown surrogate {self.surrogate!r}; expected one of {SURROGATES}")

    def reverse_config(self) -> ReverseConfig:
        sched = respace(make_schedule(self.schedule, self.steps), self.infer_steps)
        return ReverseConfig(schedule=sched, mode=self.mode, surrogate=self.surrogate_kind(),
                             seed=self.seed)


def config_from_dict(doc: dict, base: BenchConfig = None) -> BenchConfig:
    """Overlay the known keys of ``doc`` on ``base``; unknown keys are an error."""
    base = base or BenchConfig()
    names = {f.name for f in fields(BenchConfig)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    doc = dict(doc)
    for key in ("methods", "thresholds_rot", "thresholds_trans"):
        if key in doc and doc[key] is not None:
            doc[key] = tuple(doc[key])
    return replace(base, **doc)


def load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: config file not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return doc


def validate(cfg: BenchConfig, check_dataset: bool = True):
    if not cfg.methods:
        raise ConfigError("no methods configured")
    bad = [m for m in cfg.methods if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown methods {bad}; expected a subset of {METHODS}")
    if cfg.schedule not in KINDS:
        raise ConfigError(f"unknown schedule {cfg.schedule!r}")
    if cfg.mode not in MODES:
        raise ConfigError(f"unknown mode {cfg.mode!r}")
    if cfg.steps < 1 or not 1 <= cfg.infer_steps <= cfg.steps:
        raise ConfigError(f"need 1 <= infer_steps ({cfg.infer_steps}) <= steps ({cfg.steps})")
    if cfg.repeats < 1:
        raise ConfigError("repeats must be at least 1")
    if cfg.gamma < 0:
        raise ConfigError("gamma must be non-negative")
    try:
        cfg.surrogate_kind()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if check_dataset:
        if not cfg.dataset_dir or not Path(cfg.dataset_dir).is_dir():
            raise ConfigError(f"dataset directory {cfg.dataset_dir!r} does not exist")
        if not (Path(cfg.dataset_dir) / data.INDEX_NAME).exists():
            raise ConfigError(f"dataset directory {cfg.dataset_dir!r} has no {data.INDEX_NAME}")


@dataclass(frozen=True)
class BenchRow:
    pair_id: str
    method: str
    repeat: int
    re_deg: float
    te: float
    steps_used: int
    wall_ms: float
    converged: bool
    error: str = field(default="", compare=False)

    def pose_error(self) -> PoseError:
        # failed runs count as misses at every threshold
        if not self.converged and math.isnan(self.re_deg):
            return PoseError(math.pi, math.inf)
        return PoseError(math.radians(self.re_deg), self.te)


def pair_rng(seed: int, pair_id: str, repeat: int, method: str):
    """Independent stream per (seed, pair, repeat, method)."""
    key = [int(seed) & 0xFFFFFFFF, zlib.crc32(pair_id.encode()), repeat,
           zlib.crc32(method.encode())]
    return np.random.default_rng(key)


def _run_one(cfg: BenchConfig, pair, repeat: int, method: str) -> BenchRow:
    rng = pair_rng(cfg.seed, pair.id, repeat, method)
    kind = cfg.surrogate_kind()
    try:
        if method == "single_shot":
            start = time.perf_counter()
            res = single_shot_baseline(kind, pair, rng)
            wall = (time.perf_counter() - start) * 1e3
            h, steps, ok = res.h, 1, res.converged
        else:
            rcfg = replace(cfg.reverse_config(), record_trajectory=False)
            start = time.perf_counter()
            h, _ = run_inference(rcfg, pair.source, pair.model, truth=pair.h0, rng=rng,
                                 correspondences=pair.correspondences)
            wall = (time.perf_counter() - start) * 1e3
            steps, ok = rcfg.schedule.T, True
    except (Se3DiffRegError, np.linalg.LinAlgError) as exc:
        log.warning("pair %s (%s) failed: %s", pair.id, method, exc)
        return BenchRow(pair.id, method, repeat, math.nan, math.nan, 0, 0.0, False,
                        f"{type(exc).__name__}: {exc}")
    err = pose_error(h, pair.h0)
    return BenchRow(pair.id, method, repeat, err.re_deg, err.te, steps, wall, ok)


def _run_pair(args):
    cfg, pair = args
    return [_run_one(cfg, pair, rep, m) for rep in range(cfg.repeats) for m in cfg.methods]


def run_bench(cfg: BenchConfig, pairs=None):
    """Run every configured method on every pair.

    Returns the rows, ordered by pair id then repeat then method, and one
    MapReport per method. ``pairs`` may be passed in directly; otherwise
    the dataset index under ``cfg.dataset_dir`` is loaded.
    """
    validate(cfg, check_dataset=pairs is None)
    if pairs is None:
        pairs = data.load_dataset(cfg.dataset_dir)
    pairs = sorted(pairs, key=lambda p: p.id)
    workers = cfg.workers or os.cpu_count() or 1
    jobs = [(cfg, p) for p in pairs]
    if workers <= 1 or len(jobs) <= 1:
        chunks = [_run_pair(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            chunks = list(pool.map(_run_pair, jobs))
    rows = [row for chunk in chunks for row in chunk]
    reports = {}
    for m in cfg.methods:
        errs = [r.pose_error() for r in rows if r.method == m]
        if errs:
            reports[m] = map_summary(errs, cfg.thresholds_rot, cfg.thresholds_trans)
    return rows, reports


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return format(v, ".9g")
    return str(v)


def write_rows(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(ROW_FIELDS)
    for r in rows:
        w.writerow([_fmt(getattr(r, k)) for k in ROW_FIELDS])


def write_timing(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("pair_id", "method", "repeat", "wall_ms"))
    for r in rows:
        w.writerow([r.pair_id, r.method, r.repeat, format(r.wall_ms, ".3f")])


def write_reports(reports, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("method", "threshold", "axis", "fraction"))
    for method, rep in reports.items():
        rep.write_csv(fh, method)


def write_outputs(rows, reports, out_dir, cfg: BenchConfig = None):
    """rows.csv and map.csv are deterministic; wall-clock goes to timing.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "rows.csv", "w", newline="") as fh:
        write_rows(rows, fh)
    with open(out / "map.csv", "w", newline="") as fh:
        write_reports(reports, fh)
    with open(out / "timing.csv", "w", newline="") as fh:
        write_timing(rows, fh)
    if cfg is not None:
        doc = asdict(cfg)
        doc.pop("workers")
        with open(out / "config.json", "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
