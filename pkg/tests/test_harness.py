import json
import math

import numpy as np
import pytest

from oracles import random_triple_arrays
from ris_mimo.beamforming import bcd_beamform
from ris_mimo.capacity import ReflectionState, capacity
from ris_mimo.channel import ChannelTriple, SystemConfig, sample_ensemble, user_positions_for_seed
from ris_mimo.harness import (
    AltOptSettings,
    ConfigError,
    alternating_optimize_perfect,
    alternating_optimize_stochastic,
    parse_spec,
    run_bench,
    run_experiment,
)
from ris_mimo.harness.altopt import beamform_random_subset, greedy_random_phase
from ris_mimo.harness.experiment import read_csv, strip_timing
from ris_mimo.selection import greedy_select

DESK = SystemConfig()
FAST_SPGM = {"spgm_T": 40, "spgm_B": 4}


def _triple(seed, K=3, L=10, N=6):
    return ChannelTriple(*random_triple_arrays(np.random.default_rng(seed), K, L, N))


def _caps(report):
    return [rd.capacity for rd in report.rounds]


# --- perfect-CSI alternation -----------------------------------------------------


def test_perfect_no_ris_single_round():
    t = _triple(0, N=0)
    cfg = AltOptSettings(n_select=4, snr=2.0, seed=0)
    rep = alternating_optimize_perfect(t, cfg)
    assert len(rep.rounds) == 1 and rep.converged
    r = ReflectionState.ones(0)
    assert rep.antennas == greedy_select(t, r, 4, 2.0)
    assert rep.capacity == pytest.approx(capacity(t, rep.antennas, r, 2.0))


def test_perfect_full_set_reduces_to_bcd():
    t = _triple(1, L=4)
    cfg = AltOptSettings(n_select=4, snr=2.0, seed=3)
    rep = alternating_optimize_perfect(t, cfg)
    assert rep.antennas == (0, 1, 2, 3)
    r0 = ReflectionState.random(t.N, np.random.default_rng(3))
    r = bcd_beamform(t, (0, 1, 2, 3), r0, 2.0)
    assert rep.capacity >= capacity(t, (0, 1, 2, 3), r, 2.0) - 1e-9


def test_perfect_beats_component_baselines():
    for seed in range(5):
        t = _triple(seed + 10)
        cfg = AltOptSettings(n_select=4, snr=2.0, seed=seed)
        rep = alternating_optimize_perfect(t, cfg)
        assert np.all(np.diff(_caps(rep)) >= 0)
        base = max(greedy_random_phase(t, cfg)[2], beamform_random_subset(t, cfg)[2])
        assert rep.capacity >= base - 1e-9
        assert set(rep.wall_times) == {"selection", "beamforming"}


# --- sample-based alternation -------------------------------------------------------


def test_stochastic_single_sample_matches_perfect():
    # one user: relaxed coordinate optima lie on the unit circle, so the
    # relaxed BCD follows the closed-form trajectory
    cfg_sys = DESK.with_(K=1)
    for seed in range(3):
        e = sample_ensemble(cfg_sys, 1, seed)
        cfg = AltOptSettings(n_select=cfg_sys.N_S, snr=cfg_sys.snr, seed=seed, method="simple_greedy")
        stoch = alternating_optimize_stochastic(e, cfg)
        perf = alternating_optimize_perfect(e.samples[0], cfg)
        assert stoch.rounds[0].antennas == perf.rounds[0].antennas
        assert stoch.capacity == pytest.approx(perf.capacity, abs=1e-4)


def test_stochastic_unknown_method():
    e = sample_ensemble(DESK, 2, 0)
    with pytest.raises(ConfigError):
        alternating_optimize_stochastic(e, AltOptSettings(n_select=4, snr=DESK.snr, method="anneal"))


def test_stochastic_rounds_monotone():
    e = sample_ensemble(DESK, 10, 1)
    cfg = AltOptSettings(n_select=4, snr=DESK.snr, seed=1, method="spgm", **FAST_SPGM)
    rep = alternating_optimize_stochastic(e, cfg)
    assert np.all(np.diff(_caps(rep)) >= 0)


def _stochastic_capacity(seed, **kw):
    pos = user_positions_for_seed(DESK, seed)
    e = sample_ensemble(DESK, 20, seed, user_positions=pos)
    cfg = AltOptSettings(n_select=DESK.N_S, snr=DESK.snr, seed=seed, **FAST_SPGM, **kw)
    return alternating_optimize_stochastic(e, cfg).capacity


def test_random_selection_below_spgm_sign_test():
    wins = sum(
        _stochastic_capacity(s, method="random", beamform=False)
        < _stochastic_capacity(s, method="spgm", beamform=False)
        for s in range(20)
    )
    # one-sided binomial(20, 1/2): P(X >= 15) = 0.021
    assert wins >= 15


# --- experiments ----------------------------------------------------------------------


def _spec(**kw):
    data = {
        "name": "t",
        "regime": "perfect",
        "seed": 0,
        "realizations": 10,
        "methods": ["joint", "greedy_random_phase", "greedy_no_ris"],
        "grid": {"N_S": [2, 4]},
    }
    data.update(kw)
    return parse_spec(data)


def test_empty_methods_config_error_no_outputs(tmp_path):
    with pytest.raises(ConfigError):
        run_experiment(parse_spec({"methods": []}), tmp_path / "out")
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize(
    "data",
    [
        {"methods": ["joint"], "bogus": 1},
        {"methods": ["warp"]},
        {"methods": ["joint"], "grid": {"Q": [1]}},
        {"methods": ["joint"], "grid": {"N_S": []}},
        {"methods": ["joint"], "grid": {"N_S": [99]}},
        {"methods": ["joint"], "settings": {"foo": 1}},
        {"methods": ["joint"], "regime": "quantum"},
    ],
)
def test_invalid_specs_rejected(data):
    with pytest.raises(ConfigError):
        parse_spec(data)


def test_experiment_outputs_and_schema(tmp_path):
    paths = run_experiment(_spec(), tmp_path)
    runs = read_csv(paths["runs"])
    assert len(runs) == 2 * 10 * 3
    assert {"N_S", "seed", "method", "capacity", "wall_time", "antennas"} <= set(runs[0])
    agg = read_csv(paths["aggregate"])
    assert len(agg) == 6 and {"mean", "stderr", "n"} <= set(agg[0])
    manifest = json.loads(paths["manifest"].read_text())
    assert manifest["spec_digest"] and manifest["tool_version"]


def test_experiment_trends_small(tmp_path):
    paths = run_experiment(_spec(grid={"N_S": [2, 4, 6]}), tmp_path)
    means = {(int(r["N_S"]), r["method"]): float(r["mean"]) for r in read_csv(paths["aggregate"])}
    joint = [means[(n, "joint")] for n in (2, 4, 6)]
    assert joint[0] < joint[1] < joint[2]
    for n in (2, 4, 6):
        assert means[(n, "joint")] >= means[(n, "greedy_random_phase")]


def test_experiment_reproducible(tmp_path):
    spec = _spec(realizations=3)
    a = run_experiment(spec, tmp_path / "a")
    b = run_experiment(spec, tmp_path / "b")
    for key in ("runs", "aggregate"):
        assert strip_timing(a[key]) == strip_timing(b[key])
    assert a["manifest"].read_bytes() == b["manifest"].read_bytes()


def test_experiment_parallel_matches_serial(tmp_path):
    a = run_experiment(_spec(realizations=3), tmp_path / "a")
    b = run_experiment(_spec(realizations=3, workers=2), tmp_path / "b")
    assert strip_timing(a["runs"]) == strip_timing(b["runs"])


def test_stochastic_experiment_runs(tmp_path):
    spec = parse_spec(
        {
            "regime": "stochastic",
            "realizations": 2,
            "samples": 3,
            "methods": ["spgm_bcd", "random_random_phase"],
            "settings": FAST_SPGM,
        }
    )
    rows = read_csv(run_experiment(spec, tmp_path)["runs"])
    assert [r["method"] for r in rows] == ["spgm_bcd", "random_random_phase"] * 2


# --- bench ------------------------------------------------------------------------------


def _bench_spec(**bench):
    return parse_spec({"name": "b", "methods": ["joint"], "bench": bench})


def test_bench_report(tmp_path):
    rep = run_bench(
        _bench_spec(repetitions=2, exhaustive_cases=[[8, 2], [20, 10]], stochastic={"samples": 4, "spgm_T": 10, "spgm_B": 2, "cg_B": 2}),
        tmp_path,
    )
    small, big = rep["selection"]
    assert small["exhaustive_status"] == "ok" and small["subsets"] == math.comb(8, 2)
    assert big["exhaustive_status"] == "budget-exceeded" and "exhaustive" not in big
    assert rep["gradient"]["speedup"] > 10
    assert set(rep["stochastic"]) == {"spgm", "simple_greedy", "continuous_greedy"}
    assert "stdev_s" in small["greedy"]
    assert json.loads((tmp_path / "bench.json").read_text())["name"] == "b"


def test_bench_single_repetition_has_no_variance():
    rep = run_bench(
        _bench_spec(repetitions=1, exhaustive_cases=[[6, 2]], gradient={"L": 32, "K": 4, "S": 4}, stochastic={"samples": 2, "spgm_T": 5, "spgm_B": 1, "cg_B": 1})
    )
    assert "stdev_s" not in rep["selection"][0]["greedy"]
    assert "stdev_s" not in rep["gradient"]["fast"]
    assert all("stdev_s" not in v for v in rep["stochastic"].values())


def test_bench_rejects_zero_repetitions():
    with pytest.raises(ValueError):
        run_bench(_bench_spec(repetitions=0))
