"""Seeded parameter sweeps over the perfect-CSI and sample-based methods.

A spec file is a YAML mapping::

    name: ns_sweep
    regime: perfect            # or stochastic
    profile: desk              # base SystemConfig (desk | paper)
    seed: 1
    realizations: 100
    methods: [joint, greedy_random_phase, greedy_no_ris]
    system: {N: 8}             # SystemConfig overrides
    grid: {N_S: [2, 4, 6, 8]}  # cartesian product over the listed keys
    settings: {max_rounds: 10} # AltOptSettings overrides
    samples: 20                # ensemble size, stochastic regime only
    workers: 1

Results go to ``runs.csv`` (one row per realization, grid point and
method), ``aggregate.csv`` (mean and standard error) and ``manifest.json``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from .. import __version__
from ..capacity import ReflectionState, capacity
from ..channel import PROFILES, SystemConfig, sample_ensemble, sample_triple, user_positions_for_seed
from ..selection import exhaustive_select, random_select
from ..stochastic_selection import empirical_capacity
from .altopt import (
    AltOptSettings,
    ConfigError,
    alternating_optimize_perfect,
    alternating_optimize_stochastic,
    beamform_random_subset,
    greedy_no_ris,
    greedy_random_phase,
)

SPEC_KEYS = {
    "name",
    "regime",
    "profile",
    "seed",
    "realizations",
    "methods",
    "system",
    "grid",
    "settings",
    "samples",
    "workers",
    "bench",
}
RUN_COLUMNS = ("realization", "seed", "method", "capacity", "antennas", "wall_time")
AGG_COLUMNS = ("method", "n", "mean", "stderr")
TIMING_COLUMNS = ("wall_time",)


# --- perfect-CSI methods: (triple, settings) -> (S, state, capacity) ------


def _joint(t, cfg):
    rep = alternating_optimize_perfect(t, cfg)
    return rep.antennas, rep.state, rep.capacity


def _random_random_phase(t, cfg):
    rng = np.random.default_rng(cfg.seed)
    r = ReflectionState.random(t.N, rng)
    S = random_select(t.L, cfg.n_select, rng)
    return S, r, capacity(t, S, r, cfg.snr)


def _exhaustive_random_phase(t, cfg):
    r = ReflectionState.random(t.N, np.random.default_rng(cfg.seed))
    S, c = exhaustive_select(t, r, cfg.n_select, cfg.snr)
    return S, r, c


PERFECT_METHODS: dict[str, Callable] = {
    "joint": _joint,
    "greedy_random_phase": greedy_random_phase,
    "greedy_no_ris": greedy_no_ris,
    "random_beamform": beamform_random_subset,
    "random_random_phase": _random_random_phase,
    "exhaustive_random_phase": _exhaustive_random_phase,
}

# stochastic methods: name -> (selection method, beamform?)
STOCHASTIC_METHODS: dict[str, tuple[str, bool]] = {
    "spgm_bcd": ("spgm", True),
    "spgm_random_phase": ("spgm", False),
    "simple_greedy_bcd": ("simple_greedy", True),
    "simple_greedy_random_phase": ("simple_greedy", False),
    "cg_bcd": ("continuous_greedy", True),
    "random_bcd": ("random", True),
    "random_random_phase": ("random", False),
}


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    regime: str
    base: SystemConfig
    seed: int
    realizations: int
    methods: tuple[str, ...]
    grid: dict[str, tuple]
    settings: dict[str, Any] = field(default_factory=dict)
    samples: int = 20
    workers: int = 1
    bench: dict[str, Any] = field(default_factory=dict)

    def grid_points(self) -> list[dict[str, Any]]:
        keys = sorted(self.grid)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(self.grid[k] for k in keys))]

    def digest(self) -> str:
        payload = json.dumps(
            {
                "name": self.name,
                "regime": self.regime,
                "base": asdict(self.base),
                "seed": self.seed,
                "realizations": self.realizations,
                "methods": list(self.methods),
                "grid": {k: list(v) for k, v in self.grid.items()},
                "settings": self.settings,
                "samples": self.samples,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()


_CONFIG_FIELDS = {f.name for f in fields(SystemConfig)}
_SETTINGS_FIELDS = {f.name for f in fields(AltOptSettings)} - {"n_select", "snr", "seed", "method", "beamform"}


def parse_spec(data: dict, default_profile: str = "desk") -> ExperimentSpec:
    """Validate a spec mapping; every problem is reported before any compute."""
    if not isinstance(data, dict):
        raise ConfigError("spec must be a mapping")
    unknown = set(data) - SPEC_KEYS
    if unknown:
        raise ConfigError(f"unknown spec keys: {sorted(unknown)}")
    regime = data.get("regime", "perfect")
    if regime not in ("perfect", "stochastic"):
        raise ConfigError(f"regime must be perfect or stochastic, got {regime!r}")
    profile = data.get("profile", default_profile)
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    system = data.get("system") or {}
    bad = set(system) - _CONFIG_FIELDS
    if bad:
        raise ConfigError(f"unknown system keys: {sorted(bad)}")
    try:
        base = replace(PROFILES[profile], **system)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid system config: {exc}") from exc

    methods = tuple(data.get("methods") or ())
    if not methods:
        raise ConfigError("method list is empty")
    table = PERFECT_METHODS if regime == "perfect" else STOCHASTIC_METHODS
    missing = [m for m in methods if m not in table]
    if missing:
        raise ConfigError(f"unknown {regime} methods {missing}; available: {sorted(table)}")

    grid_in = data.get("grid") or {}
    if not isinstance(grid_in, dict):
        raise ConfigError("grid must be a mapping of key -> list of values")
    grid = {}
    for key, values in grid_in.items():
        if key not in _CONFIG_FIELDS | {"samples"}:
            raise ConfigError(f"grid key {key!r} is not a SystemConfig field")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"grid values for {key!r} must be a non-empty list")
        grid[key] = tuple(values)

    settings = data.get("settings") or {}
    bad = set(settings) - _SETTINGS_FIELDS
    if bad:
        raise ConfigError(f"unknown settings keys: {sorted(bad)}")

    realizations = int(data.get("realizations", 100))
    samples = int(data.get("samples", 20))
    if realizations < 1 or samples < 1:
        raise ConfigError("realizations and samples must be positive")
    spec = ExperimentSpec(
        name=str(data.get("name", "experiment")),
        regime=regime,
        base=base,
        seed=int(data.get("seed", 0)),
        realizations=realizations,
        methods=methods,
        grid=grid,
        settings=dict(settings),
        samples=samples,
        workers=int(data.get("workers", 1)),
        bench=dict(data.get("bench") or {}),
    )
    for point in spec.grid_points():
        _point_config(spec, point)
    return spec


def load_spec(path: str | Path, default_profile: str = "desk") -> ExperimentSpec:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    return parse_spec(data, default_profile)


def _point_config(spec: ExperimentSpec, point: dict) -> SystemConfig:
    changes = {k: v for k, v in point.items() if k in _CONFIG_FIELDS}
    try:
        return replace(spec.base, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid grid point {point}: {exc}") from exc


def realization_seed(master: int, realization: int) -> int:
    return int(np.random.SeedSequence([master, realization]).generate_state(1, np.uint32)[0])


def _settings(spec: ExperimentSpec, config: SystemConfig, seed: int, **extra) -> AltOptSettings:
    return AltOptSettings(n_select=config.N_S, snr=config.snr, seed=seed, **spec.settings, **extra)


def run_point(spec: ExperimentSpec, point: dict, realization: int) -> list[dict]:
    """All methods for one (grid point, realization); channels shared across methods."""
    config = _point_config(spec, point)
    seed = realization_seed(spec.seed, realization)
    positions = user_positions_for_seed(config, seed)
    rows = []
    if spec.regime == "perfect":
        t = sample_triple(config, positions, (seed, 0))
        for method in spec.methods:
            tic = time.perf_counter()
            S, _, c = PERFECT_METHODS[method](t, _settings(spec, config, seed))
            rows.append(_row(point, realization, seed, method, c, S, time.perf_counter() - tic))
    else:
        s = int(point.get("samples", spec.samples))
        e = sample_ensemble(config, s, seed, user_positions=positions)
        for method in spec.methods:
            sel, beamform = STOCHASTIC_METHODS[method]
            cfg = _settings(spec, config, seed, method=sel, beamform=beamform)
            tic = time.perf_counter()
            rep = alternating_optimize_stochastic(e, cfg)
            c = empirical_capacity(e, rep.antennas, rep.state, config.snr)
            rows.append(_row(point, realization, seed, method, c, rep.antennas, time.perf_counter() - tic))
    return rows


def _row(point, realization, seed, method, cap, S, wall) -> dict:
    row = dict(point)
    row.update(
        realization=realization,
        seed=seed,
        method=method,
        capacity=float(cap),
        antennas=" ".join(str(i) for i in S),
        wall_time=float(wall),
    )
    return row


def _run_task(args):
    spec, point, realization = args
    return run_point(spec, point, realization)


def run_rows(spec: ExperimentSpec) -> list[dict]:
    tasks = [(spec, p, k) for p in spec.grid_points() for k in range(spec.realizations)]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            chunks = list(pool.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    rows = [row for chunk in chunks for row in chunk]
    keys = sorted(spec.grid)
    order = {m: i for i, m in enumerate(spec.methods)}
    rows.sort(key=lambda r: (tuple(r[k] for k in keys), r["realization"], order[r["method"]]))
    return rows


def aggregate(spec: ExperimentSpec, rows: list[dict]) -> list[dict]:
    keys = sorted(spec.grid)
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        groups.setdefault((tuple(row[k] for k in keys), row["method"]), []).append(row["capacity"])
    out = []
    for point in spec.grid_points():
        pkey = tuple(point[k] for k in keys)
        for method in spec.methods:
            vals = np.asarray(groups[(pkey, method)])
            se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else float("nan")
            agg = dict(point)
            agg.update(method=method, n=int(vals.size), mean=float(vals.mean()), stderr=se)
            out.append(agg)
    return out


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        missing = [c for c in columns if c not in row]
        if missing:
            raise ValueError(f"result row lacks columns {missing}")
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def run_experiment(spec: ExperimentSpec | str | Path, out: str | Path) -> dict[str, Path]:
    """Run the sweep and write runs.csv, aggregate.csv and manifest.json."""
    if not isinstance(spec, ExperimentSpec):
        spec = load_spec(spec)
    out = Path(out)
    rows = run_rows(spec)
    keys = sorted(spec.grid)
    aggs = aggregate(spec, rows)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "runs": out / "runs.csv",
        "aggregate": out / "aggregate.csv",
        "manifest": out / "manifest.json",
    }
    paths["runs"].write_text(_csv_text(rows, keys + list(RUN_COLUMNS)), encoding="utf-8")
    paths["aggregate"].write_text(_csv_text(aggs, keys + list(AGG_COLUMNS)), encoding="utf-8")
    manifest = {
        "name": spec.name,
        "regime": spec.regime,
        "tool_version": __version__,
        "spec_digest": spec.digest(),
        "base_config_digest": spec.base.digest(),
        "point_config_digests": {
            json.dumps(p, sort_keys=True): _point_config(spec, p).digest() for p in spec.grid_points()
        },
        "master_seed": spec.seed,
        "realizations": spec.realizations,
        "methods": list(spec.methods),
        "timing_columns": list(TIMING_COLUMNS),
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def strip_timing(path: str | Path) -> str:
    """CSV text with the timing columns removed, for reproducibility diffs."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    drop = {i for i, c in enumerate(rows[0]) if c in TIMING_COLUMNS}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow([v for i, v in enumerate(row) if i not in drop])
    return buf.getvalue()
