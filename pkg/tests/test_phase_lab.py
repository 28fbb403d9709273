import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import binomtest, chi2

from conelab.phase_lab import (
    ConfigError,
    ExperimentConfig,
    GridRow,
    PhaseGrid,
    coordinate_subspace,
    fit_transition,
    run_experiment,
    wilson_interval,
)


def cfg(**kw):
    base = {"trials": 20, "seed": 7}
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def synthetic_rows(xs, ps, trials=1000):
    return [GridRow.from_counts(int(x), trials, int(round(p * trials))) for x, p in zip(xs, ps)]


# ------------------------------------------------------------------ config


def test_config_round_trip_and_digest():
    c = cfg(experiment="escape", cone_K="orthant:10", axis="ell", grid=[2, 4, 6])
    again = ExperimentConfig.from_json(json.dumps(c.to_dict()))
    assert again == c and again.digest() == c.digest()
    assert cfg(experiment="escape", cone_K="orthant:10", axis="ell", grid=[2, 4, 7]).digest() != c.digest()


@pytest.mark.parametrize(
    "bad",
    [
        {"experiment": "escape", "cone_K": "orthant:10", "grid": [2], "colour": 1},
        {"cone_K": "orthant:10", "grid": [2]},
        {"experiment": "escape", "grid": [2]},
        {"experiment": "nope", "cone_K": "orthant:10", "grid": [2]},
        {"experiment": "escape", "cone_K": "orthant:10", "grid": [2], "trials": 5},
        {"experiment": "escape", "cone_K": "orthant:10", "grid": [4, 2]},
        {"experiment": "escape", "cone_K": "orthant:10", "grid": [2.5]},
        {"experiment": "escape", "cone_K": "orthant:10", "grid": []},
        {"experiment": "escape", "cone_K": "orthant:10", "grid": "2,3"},
        {"experiment": "escape", "cone_K": "orthant:10", "grid": [0]},
        {"experiment": "escape", "cone_K": "orthant:10", "grid": [11]},
        {"experiment": "escape", "cone_K": "orthant:10", "grid": [2], "axis": "m"},
        {"experiment": "escape", "cone_K": "trivial:10", "grid": [2]},
        {"experiment": "escape", "cone_K": "orthant:{m}", "grid": [2]},
        {"experiment": "escape", "cone_K": "orthant:{q}", "grid": [2]},
        {"experiment": "escape", "cone_K": "orthant:10", "n": 11, "grid": [2]},
        {"experiment": "cp", "cone_K": "orthant:10", "axis": "m", "grid": [2], "b_mode": "half"},
        {"experiment": "cp", "cone_K": "orthant:10", "axis": "m", "grid": [2], "x_spec": "e11"},
        {"experiment": "kinematic", "cone_K": "orthant:10", "m": 5, "cone_L": "orthant:4", "grid": [1]},
        {"experiment": "kinematic", "cone_K": "orthant:10", "m": 5, "grid": [6]},
        {"experiment": "local_dm", "cone_K": "orthant:50", "m": 10, "ell": 3, "k": 4},
        {"experiment": "local_dm", "cone_K": "orthant:50", "m": 10, "ell": 3, "epsilon": 1.5},
        {"experiment": "local_dm", "cone_K": "orthant:50", "m": 10, "ell": 3, "tau": 0.5},
        {"experiment": "local_dm", "cone_K": "orthant:50", "m": 10},
        {"experiment": "local_dm", "cone_K": "orthant:50", "m": 10, "ell": 3, "grid": [1]},
        {"experiment": "dm_concentration", "cone_K": "orthant:50", "m": 10, "ell": 11},
        {"experiment": "escape", "cone_K": "orthant:10", "grid": [2], "solver_tol": 0.5},
        {"experiment": "escape", "cone_K": "orthant:10", "grid": [2], "seed": -1},
    ],
)
def test_config_rejects(bad):
    bad = dict(bad)
    bad.setdefault("trials", 20)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_bad_json():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("[1, 2]")


def test_templates_fill_per_grid_point():
    c = cfg(experiment="logistic", cone_K="subspace:{n}:{delta}", n=12, m=30, axis="delta", grid=[2, 5])
    assert c.setup(0).K.k == 2 and c.setup(1).K.k == 5


def test_coordinate_subspace():
    assert coordinate_subspace(4, 0).dim == 4
    assert type(coordinate_subspace(4, 4)).__name__ == "Full"
    assert coordinate_subspace(4, 2).k == 2


def test_local_dm_tau_guard():
    # m - ell = 40 > (1 - tau) * delta(Orthant(60)) = 22.5
    c = cfg(experiment="local_dm", cone_K="orthant:60", m=50, ell=10)
    with pytest.raises(ConfigError, match="tau"):
        run_experiment(c)


# ------------------------------------------------------------------ wilson


@pytest.mark.parametrize("k,n", [(0, 20), (5, 20), (20, 20), (137, 300), (1, 1000)])
def test_wilson_matches_scipy(k, n):
    ref = binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    lo, hi = wilson_interval(k, n)
    assert lo == pytest.approx(ref.low, abs=1e-4)
    assert hi == pytest.approx(ref.high, abs=1e-4)


@given(st.integers(1, 500).flatmap(lambda n: st.tuples(st.integers(0, n), st.just(n))))
def test_wilson_contains_estimate(kn):
    k, n = kn
    lo, hi = wilson_interval(k, n)
    assert 0 <= lo <= k / n <= hi <= 1
    assert (lo == 0) == (k == 0) and (hi == 1) == (k == n)


# ------------------------------------------------------------------ fitting


def test_fit_step():
    xs = list(range(5, 21))
    rows = synthetic_rows(xs, [0.0 if x < 13 else 1.0 for x in xs])
    theta0, _, _ = fit_transition(rows)
    assert abs(theta0 - 12.5) <= 1.0


def test_fit_sigmoid():
    xs = list(range(5, 21))
    rows = synthetic_rows(xs, [1 / (1 + math.exp(-(x - 12.5))) for x in xs])
    theta0, slope, ok = fit_transition(rows)
    assert 12 <= theta0 <= 13 and ok
    assert slope == pytest.approx(1.0, rel=0.2)


def test_fit_decreasing_sigmoid():
    xs = list(range(0, 40, 3))
    rows = synthetic_rows(xs, [1 / (1 + math.exp(0.5 * (x - 20))) for x in xs])
    theta0, slope, ok = fit_transition(rows)
    assert abs(theta0 - 20) <= 1.5 and slope < 0 and ok


def test_fit_degenerate_cases():
    xs = list(range(10))
    assert fit_transition(synthetic_rows(xs, [1.0] * 10))[2] is False
    assert fit_transition(synthetic_rows(xs[:4], [0, 0.3, 0.6, 1.0]))[2] is False
    # crossing outside the grid
    far = [1 / (1 + math.exp(-(x - 30))) for x in xs]
    assert fit_transition(synthetic_rows(xs, far))[2] is False


def test_fit_flags_significant_reversal():
    xs = list(range(10))
    ps = [0.0, 0.05, 0.1, 0.3, 0.9, 0.2, 0.6, 0.9, 0.95, 1.0]
    assert fit_transition(synthetic_rows(xs, ps))[2] is False


# -------------------------------------------------------------- exact laws


def test_kinematic_subspace_law():
    c = cfg(experiment="kinematic", cone_K="subspace:10:4", m=8, axis="ell", grid=list(range(0, 9)))
    g = run_experiment(c)
    for r in g.rows:
        assert r.p_hat == (1.0 if r.control + 4 > 8 else 0.0)


def test_kinematic_full_L_always_meets():
    c = cfg(experiment="kinematic", cone_K="orthant:6", m=5, axis="ell", grid=[5])
    assert run_experiment(c).rows[0].p_hat == 1.0
    c = cfg(experiment="kinematic", cone_K="orthant:6", cone_L="full:{m}", axis="m", grid=[2, 4])
    assert all(r.p_hat == 1.0 for r in run_experiment(c).rows)


def test_preimage_null_space_law():
    c = cfg(experiment="preimage", cone_K="subspace:12:5", cone_L="trivial:{m}", axis="m", grid=list(range(1, 12)))
    for r in run_experiment(c).rows:
        assert r.p_hat == (1.0 if 5 > r.control else 0.0)


def test_preimage_full_L():
    c = cfg(experiment="preimage", cone_K="orthant:6", cone_L="full:{m}", axis="m", grid=[2, 8])
    assert all(r.p_hat == 1.0 for r in run_experiment(c).rows)


def test_escape_subspace_law():
    c = cfg(experiment="escape", cone_K="subspace:15:6", axis="ell", grid=list(range(1, 16)))
    for r in run_experiment(c).rows:
        assert r.p_hat == (1.0 if r.control + 6 > 15 else 0.0)


def test_escape_delta_axis():
    c = cfg(experiment="escape", cone_K="subspace:15:{delta}", ell=5, axis="delta", grid=[8, 10, 11, 14])
    assert [r.p_hat for r in run_experiment(c).rows] == [0.0, 0.0, 1.0, 1.0]


def test_logistic_single_sample_never_exists():
    c = cfg(experiment="logistic", cone_K="full:3", axis="m", grid=[1])
    assert run_experiment(c).rows[0].p_hat == 0.0


def test_cp_tallies_sum_to_trials():
    c = cfg(experiment="cp", cone_K="orthant:6", axis="m", grid=[1, 3, 5], b_mode="unit")
    g = run_experiment(c)
    for r in g.rows:
        tally = dict(r.outcomes)
        assert sum(tally.values()) == r.trials
        assert r.successes == tally["bounded"]
    lines = g.to_csv().splitlines()
    assert lines[1] == "control,trials,successes,p_hat,ci_lo,ci_hi,p_infeasible,p_bounded,p_unbounded"
    for line in lines[2:-1]:
        cols = [float(v) for v in line.split(",")[6:]]
        assert sum(cols) == pytest.approx(1.0)


# ------------------------------------------------------------ DM experiments


def test_dm_concentration_chi_square_median():
    c = cfg(experiment="dm_concentration", cone_K="full:30", m=10, ell=10, trials=400)
    rep = run_experiment(c)
    h2 = np.array([r[1] for r in rep.rows])
    # median of chi^2_30 with an order-statistic standard error
    se = 1.2533 * math.sqrt(60) / math.sqrt(len(h2))
    assert abs(np.median(h2) - chi2.median(30)) <= 4 * se


def test_dm_concentration_zero_regime():
    # delta(Orthant(10)) = 5 is below delta(L polar) = m - ell = 15
    c = cfg(experiment="dm_concentration", cone_K="orthant:10", m=20, ell=5, trials=40)
    rep = run_experiment(c)
    assert rep.summary["zero_fraction"] >= 0.9
    assert rep.summary["target"] == -10


def test_local_dm_full_cone():
    c = cfg(experiment="local_dm", cone_K="full:60", m=10, ell=10, k=1, n_dir=10)
    rep = run_experiment(c)
    assert rep.summary["target_radius"] == pytest.approx(math.sqrt(60))
    med = np.median([r[3] for r in rep.rows])
    assert abs(med - 1) <= 0.1


# ---------------------------------------------------------- output / repro


def test_csv_layout():
    c = cfg(experiment="escape", cone_K="subspace:8:3", axis="ell", grid=[1, 5, 6, 7, 8])
    text = run_experiment(c).to_csv()
    lines = text.splitlines()
    assert lines[0].startswith("# conelab v") and f"seed=7" in lines[0] and f"config={c.digest()}" in lines[0]
    assert "rng=philox4x64" in lines[0]
    assert lines[1] == "control,trials,successes,p_hat,ci_lo,ci_hi"
    assert lines[2].startswith("1,20,0,0,0,")
    assert lines[-1].startswith("# theta0=") and "fit_ok=" in lines[-1]


def test_same_config_same_rows():
    c = cfg(experiment="escape", cone_K="orthant:12", axis="ell", grid=[3, 6, 9])
    assert run_experiment(c).to_csv() == run_experiment(c).to_csv()


def test_workers_do_not_change_output():
    c = cfg(experiment="escape", cone_K="orthant:12", axis="ell", grid=[3, 6, 9])
    assert run_experiment(c, workers=2).to_csv() == run_experiment(c, workers=1).to_csv()


def test_seed_changes_output():
    a = cfg(experiment="escape", cone_K="orthant:12", axis="ell", grid=[5, 6, 7])
    b = cfg(experiment="escape", cone_K="orthant:12", axis="ell", grid=[5, 6, 7], seed=8)
    assert [r.successes for r in run_experiment(a).rows] != [r.successes for r in run_experiment(b).rows]


def test_phase_grid_row_lookup():
    g = PhaseGrid(synthetic_rows([1, 2], [0.0, 1.0]), (math.nan, math.nan, False))
    assert g.row(2).p_hat == 1.0
    with pytest.raises(KeyError):
        g.row(3)
