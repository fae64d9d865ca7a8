import numpy as np
import pytest

from recdir.dgp import Ar2Params, derive_seed
from recdir.errors import DegenerateError, ValidationError
from recdir.mcharness import (
    SweepConfig,
    empirical_ev,
    pearson,
    run_cell,
    run_sweep,
    run_trials,
    summarize,
    write_cells_csv,
)
from recdir.polypred import linear_two_step_map

SMALL = dict(n_train=500, n_eval=1000, n_seeds=10, burn_in=200)


def test_empirical_ev_examples():
    assert empirical_ev([[1, 2, 3]] * 4) == 0
    c = np.array([0.0, 1.0, 3.0])
    P = np.tile(np.arange(5.0), (3, 1)) + c[:, None]
    assert empirical_ev(P) == pytest.approx(np.var(c, ddof=1))
    with pytest.raises(ValidationError):
        empirical_ev([[1, 2, 3]])


def test_empirical_ev_shift_invariant():
    rng = np.random.default_rng(0)
    P = rng.standard_normal((6, 40))
    shift = rng.standard_normal(40)
    assert empirical_ev(P + shift) == pytest.approx(empirical_ev(P), rel=1e-12)
    assert empirical_ev(P) >= 0


def test_empirical_ev_matches_trace_identity():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((2, 2))
    S = A @ A.T
    X = rng.standard_normal((2000, 2))
    thetas = rng.multivariate_normal([0, 0], S, size=400)
    got = empirical_ev(thetas @ X.T)
    want = np.trace(S @ (X.T @ X / len(X)))
    per_point = np.einsum("ni,ij,nj->n", X, S, X)
    # variance estimate from 400 draws: relative s.e. about sqrt(2/399) on each point
    se = np.sqrt(2 / 399) * np.sqrt(np.mean(per_point ** 2))
    assert abs(got - want) < 3 * se


def test_pearson_examples():
    x = np.arange(10.0)
    assert pearson(x, 2 * x + 1) == pytest.approx(1.0)
    assert pearson(x, -x) == pytest.approx(-1.0)
    with pytest.raises(DegenerateError):
        pearson(x, np.ones(10))
    with pytest.raises(ValidationError):
        pearson([1.0], [2.0])


def test_pearson_null():
    rng = np.random.default_rng(2)
    assert abs(pearson(rng.standard_normal(10_000), rng.standard_normal(10_000))) < 0.05


def test_config_validation():
    with pytest.raises(ValidationError):
        SweepConfig(a_grid=())
    with pytest.raises(ValidationError):
        SweepConfig(n_seeds=0)
    with pytest.raises(ValidationError):
        SweepConfig(sigma_e_grid=(-0.1,))


def test_derived_recursive_is_composition_of_fit():
    trials, _, _ = run_trials(Ar2Params(0.5, 0.2, 1, 0.3), SweepConfig(**SMALL), 3)
    for t in trials:
        assert tuple(t.derived_recursive) == linear_two_step_map(t.fitted_one_step)


def test_run_cell_theory_tracks_empirical():
    cfg = SweepConfig(n_train=2000, n_eval=5000, n_seeds=50)
    rep = run_cell(Ar2Params(0.5, 0.2, 1, 0), cfg, 0)
    assert not rep.failed and rep.n_ok == 50
    assert rep.pearson_r > 0.95
    assert -1 <= rep.pearson_r <= 1 and rep.bias_distance >= 0


def test_identical_seeds_have_no_variance():
    cfg = SweepConfig(**{**SMALL, "n_seeds": 2})
    rep = run_cell(Ar2Params(0.5, 0.2, 1, 0), cfg, 0, trial_seeds=[7, 7])
    assert rep.ev_emp_rec == rep.ev_emp_dir == rep.ev_emp_one == 0


def test_bias_shrinks_with_training_size():
    p = Ar2Params(0.5, 0.2, 1, 0)
    dist = [run_cell(p, SweepConfig(n_train=n, n_eval=1000, n_seeds=50), 4).bias_distance
            for n in (500, 2000, 8000)]
    assert dist[0] > dist[1] > dist[2]


def test_unstable_cell_rejected():
    with pytest.raises(ValidationError):
        run_cell(Ar2Params(0.5, 0.6), SweepConfig(**SMALL), 0)


def test_all_zero_noise_cell_fails_cleanly():
    rep = run_cell(Ar2Params(0.5, 0.2, 0, 0), SweepConfig(**SMALL), 0)
    assert rep.failed and rep.n_failed == SMALL["n_seeds"] and np.isnan(rep.ev_emp_rec)


def test_single_cell_sweep_equals_run_cell():
    cfg = SweepConfig(a_grid=(0.5,), gamma_grid=(0.2,), sigma_s_grid=(1.0,), sigma_e_grid=(0.5,), **SMALL)
    cells, summary = run_sweep(cfg, 5)
    assert len(cells) == 1 and summary["n_cells"] == 1
    direct = run_cell(Ar2Params(0.5, 0.2, 1.0, 0.5), cfg, 5, 0)
    assert cells[0] == direct


def test_sweep_independent_of_map_function(tmp_path):
    from concurrent.futures import ThreadPoolExecutor

    cfg = SweepConfig(a_grid=(0.0, 0.4), gamma_grid=(0.0, -0.4), sigma_s_grid=(1.0,),
                      sigma_e_grid=(0.0, 0.5), **SMALL)
    a, _ = run_sweep(cfg, 9)
    with ThreadPoolExecutor(3) as ex:
        b, _ = run_sweep(cfg, 9, map_fn=ex.map)
    write_cells_csv(tmp_path / "a.csv", a)
    write_cells_csv(tmp_path / "b.csv", b)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_no_stable_cells():
    with pytest.raises(ValidationError, match="no stable cells"):
        run_sweep(SweepConfig(a_grid=(0.9,), gamma_grid=(0.5,), **SMALL), 0)


@pytest.mark.slow
def test_zero_measurement_noise_column_correlates():
    cfg = SweepConfig(sigma_s_grid=(0.4, 1.0), sigma_e_grid=(0.0,))
    _, summary = run_sweep(cfg, 0)
    for entry in summary["noise_configs"]:
        assert entry["corr_theory_rec"] > 0.95


def test_correlation_degrades_with_measurement_noise():
    cfg = SweepConfig(sigma_s_grid=(1.0,), sigma_e_grid=(0.0, 1.0), n_seeds=30)
    _, summary = run_sweep(cfg, 0)
    lo, hi = summary["noise_configs"]
    assert hi["corr_theory_rec"] < lo["corr_theory_rec"]


def test_summary_counts_failures():
    cfg = SweepConfig(a_grid=(0.5,), gamma_grid=(0.2,), sigma_s_grid=(0.0, 1.0), sigma_e_grid=(0.0,), **SMALL)
    cells, summary = run_sweep(cfg, 0)
    assert summary["n_failed_cells"] == 1 and summary["failed_fraction"] == 0.5
    assert summarize(cells, cfg) == summary


def test_cells_csv_round_trips_floats(tmp_path):
    cfg = SweepConfig(a_grid=(0.5,), gamma_grid=(0.2,), sigma_s_grid=(1.0,), sigma_e_grid=(0.0,), **SMALL)
    cells, _ = run_sweep(cfg, derive_seed(1, 2))
    write_cells_csv(tmp_path / "c.csv", cells)
    import csv
    row = next(csv.DictReader(open(tmp_path / "c.csv")))
    assert float(row["ev_emp_rec"]) == cells[0].ev_emp_rec


@pytest.mark.slow
def test_winner_maps_agree_in_low_measurement_noise_half():
    """Analytic (sign of the floor difference) and empirical winners agree on > 70% of cells.

    Cell level, over the default desk grid restricted to the lower half of the
    sigma_e values.
    """
    cfg = SweepConfig()
    cells, _ = run_sweep(cfg, 0)
    low = sorted(cfg.sigma_e_grid)[: len(cfg.sigma_e_grid) // 2]
    ok = [c for c in cells if not c.failed and c.params.sigma_e in low]
    agree = np.mean([(c.floors.delta >= 0) == (c.mse_rec < c.mse_dir) for c in ok])
    print(f"winner agreement {agree:.3f} over {len(ok)} cells (sigma_e in {low})")
    assert agree > 0.70
