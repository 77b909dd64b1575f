"""Command-line entry point.

    ris-mimo [--seed N] [--out DIR] [--profile desk|paper] [--set KEY=VALUE ...] COMMAND

Single-instance commands print a JSON summary to stdout and, with --out,
also write it to ``DIR/result.json``.  Channels are drawn from the
configured model unless ``--channels DIR`` points at a saved ensemble.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .beamforming import bcd_beamform, stochastic_bcd_beamform
from .capacity import ReflectionState, capacity
from .channel import (
    PROFILES,
    EnsembleFormatError,
    SystemConfig,
    load_ensemble,
    sample_ensemble,
    sample_triple,
    save_ensemble,
    user_positions_for_seed,
)
from .harness.altopt import (
    STOCHASTIC_METHODS,
    AltOptSettings,
    ConfigError,
    alternating_optimize_perfect,
    alternating_optimize_stochastic,
)
from .harness.bench import run_bench
from .harness.experiment import load_spec, run_experiment
from .selection import BudgetExceededError, exhaustive_select, greedy_select, random_select
from .stochastic_selection import (
    EnsembleSource,
    continuous_greedy,
    empirical_capacity,
    pipage_round,
    simple_greedy_empirical,
    spgm,
)

_CONFIG_KEYS = {f.name for f in fields(SystemConfig)}


def _config(args) -> SystemConfig:
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep or key not in _CONFIG_KEYS:
            raise ConfigError(f"bad --set {item!r}; keys: {sorted(_CONFIG_KEYS)}")
        overrides[key] = yaml.safe_load(value)
    return PROFILES[args.profile].with_(**overrides)


def _ensemble(args, cfg: SystemConfig, samples: int):
    if args.channels:
        return load_ensemble(args.channels)
    return sample_ensemble(cfg, samples, args.seed)


def _triple(args, cfg: SystemConfig):
    if args.channels:
        return load_ensemble(args.channels).samples[args.index]
    return sample_triple(cfg, user_positions_for_seed(cfg, args.seed), (args.seed, 0))


def _initial_state(args, N: int) -> ReflectionState:
    return ReflectionState.random(N, np.random.default_rng(args.seed))


def _antennas(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    return tuple(sorted(int(v) for v in text.split(",") if v.strip()))


def _emit(args, result: dict) -> None:
    text = json.dumps(result, indent=2, sort_keys=True)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "result.json").write_text(text + "\n")


def _state_json(r: ReflectionState) -> dict:
    return {"mode": r.mode, "phases": [float(v) for v in np.angle(r.beta)]}


# --- commands --------------------------------------------------------------


def cmd_gen_channels(args) -> None:
    if not args.out:
        raise ConfigError("gen-channels needs --out")
    cfg = _config(args)
    e = sample_ensemble(cfg, args.samples, args.seed)
    save_ensemble(e, args.out)
    print(json.dumps({"out": str(args.out), "s": e.s, "config_digest": e.config_digest}))


def cmd_select(args) -> None:
    cfg = _config(args)
    t = _triple(args, cfg)
    r = _initial_state(args, t.N)
    if args.method == "greedy":
        S = greedy_select(t, r, cfg.N_S, cfg.snr)
    elif args.method == "exhaustive":
        S, _ = exhaustive_select(t, r, cfg.N_S, cfg.snr, args.budget)
    else:
        S = random_select(t.L, cfg.N_S, np.random.default_rng(args.seed))
    _emit(args, {"method": args.method, "antennas": list(S), "capacity": capacity(t, S, r, cfg.snr)})


def cmd_beamform(args) -> None:
    cfg = _config(args)
    if args.regime == "perfect":
        t = _triple(args, cfg)
        r0 = _initial_state(args, t.N)
        S = _antennas(args.antennas) or greedy_select(t, r0, cfg.N_S, cfg.snr)
        r, trace = bcd_beamform(t, S, r0, cfg.snr, return_trace=True)
        cap0, cap = capacity(t, S, r0, cfg.snr), capacity(t, S, r, cfg.snr)
    else:
        e = _ensemble(args, cfg, args.samples)
        N = e.samples[0].N
        r0 = _initial_state(args, N)
        S = _antennas(args.antennas) or simple_greedy_empirical(e, r0, cfg.snr, cfg.N_S)
        r, trace = stochastic_bcd_beamform(e, S, r0, cfg.snr, return_trace=True)
        cap0, cap = empirical_capacity(e, S, r0, cfg.snr), empirical_capacity(e, S, r, cfg.snr)
    _emit(
        args,
        {
            "regime": args.regime,
            "antennas": list(S),
            "initial_capacity": cap0,
            "capacity": cap,
            "sweeps": trace.sweeps,
            "converged": trace.converged,
            "state": _state_json(r),
        },
    )


def cmd_altopt(args) -> None:
    cfg = _config(args)
    settings = AltOptSettings(
        n_select=cfg.N_S,
        snr=cfg.snr,
        seed=args.seed,
        max_rounds=args.max_rounds,
        beamform=not args.random_phase,
        method=args.method,
    )
    if args.regime == "perfect":
        report = alternating_optimize_perfect(_triple(args, cfg), settings)
    else:
        report = alternating_optimize_stochastic(_ensemble(args, cfg, args.samples), settings)
    _emit(
        args,
        {
            "regime": args.regime,
            "antennas": list(report.antennas),
            "capacity": report.capacity,
            "rounds": [rd.capacity for rd in report.rounds],
            "converged": report.converged,
            "wall_times": report.wall_times,
            "state": _state_json(report.state),
        },
    )


def cmd_stochastic_select(args) -> None:
    cfg = _config(args)
    e = _ensemble(args, cfg, args.samples)
    r = _initial_state(args, e.samples[0].N)
    rng = np.random.default_rng(args.seed)
    if args.method == "simple-greedy":
        S = simple_greedy_empirical(e, r, cfg.snr, cfg.N_S)
    else:
        src = EnsembleSource(e.samples, r)
        if args.method == "spgm":
            x = spgm(src, r, cfg.snr, cfg.N_S, T=args.T, B=args.B, rng=rng)
        else:
            x = continuous_greedy(src, r, cfg.snr, cfg.N_S, B=args.B, rng=rng)
        S = pipage_round(x, cfg.N_S, rng)
    _emit(args, {"method": args.method, "antennas": list(S), "capacity": empirical_capacity(e, S, r, cfg.snr)})


def cmd_experiment(args) -> None:
    spec = load_spec(args.spec, default_profile=args.profile)
    out = Path(args.out or f"results/{spec.name}")
    paths = run_experiment(spec, out)
    print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2, sort_keys=True))


def cmd_bench(args) -> None:
    spec = load_spec(args.spec, default_profile=args.profile)
    report = run_bench(spec, args.out)
    print(json.dumps(report, indent=2, sort_keys=True))


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ris-mimo", description="Joint antenna selection and RIS beamforming.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="SystemConfig override, repeatable")
    sub = p.add_subparsers(dest="command", required=True)

    def channel_opts(sp, samples_default: int | None = None):
        sp.add_argument("--channels", help="saved ensemble directory (default: draw from the model)")
        sp.add_argument("--index", type=int, default=0, help="sample used by single-channel commands")
        if samples_default is not None:
            sp.add_argument("--samples", type=int, default=samples_default, help="ensemble size s")

    sp = sub.add_parser("gen-channels", help="draw and save a channel ensemble")
    sp.add_argument("--samples", type=int, default=20)
    sp.set_defaults(func=cmd_gen_channels)

    sp = sub.add_parser("select", help="perfect-CSI antenna selection under random phases")
    sp.add_argument("--method", choices=["greedy", "exhaustive", "random"], default="greedy")
    sp.add_argument("--budget", type=int, default=10**6, help="exhaustive subset budget")
    channel_opts(sp)
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("beamform", help="block coordinate descent on the RIS phases")
    sp.add_argument("--regime", choices=["perfect", "stochastic"], default="perfect")
    sp.add_argument("--antennas", help="comma-separated antenna set (default: greedy)")
    channel_opts(sp, 20)
    sp.set_defaults(func=cmd_beamform)

    sp = sub.add_parser("altopt", help="alternating selection and beamforming")
    sp.add_argument("--regime", choices=["perfect", "stochastic"], default="perfect")
    sp.add_argument("--method", choices=STOCHASTIC_METHODS, default="spgm", help="stochastic selection method")
    sp.add_argument("--max-rounds", type=int, default=10)
    sp.add_argument("--random-phase", action="store_true", help="skip beamforming")
    channel_opts(sp, 20)
    sp.set_defaults(func=cmd_altopt)

    sp = sub.add_parser("stochastic-select", help="sample-based antenna selection")
    sp.add_argument("--method", choices=["spgm", "cg", "simple-greedy"], default="spgm")
    sp.add_argument("--T", type=int, default=200, help="SPGM iterations")
    sp.add_argument("--B", type=int, default=32, help="gradient batch size")
    channel_opts(sp, 20)
    sp.set_defaults(func=cmd_stochastic_select)

    sp = sub.add_parser("experiment", help="run a sweep described by a YAML spec")
    sp.add_argument("spec")
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("bench", help="timing report for a YAML spec")
    sp.add_argument("spec")
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ConfigError, EnsembleFormatError, BudgetExceededError, ValueError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
