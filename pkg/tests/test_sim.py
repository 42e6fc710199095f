import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import trapezoid

from rseio.channel import Bernoulli
from rseio.errors import ConfigError, DomainError
from rseio.estimator import EstimatorKind, run_filter
from rseio.plant import UniformError, simulate_truth
from rseio.sim import (
    MseAccumulator,
    SimConfig,
    batch_filter,
    draw_realizations,
    empirical_mse,
    epdf,
    run_experiment,
    silverman_bandwidth,
    stationarity_metric,
    with_overrides,
)
from rseio.sim import _trial_seed


def integral(grid, dens):
    return float(trapezoid(dens, grid))


@pytest.fixture(scope="module")
def small_study():
    cfg = SimConfig(horizon=40, trials=150, p0_list=(0.1, 10.0), seed=3, delta=10.0, calibration_pairs=2)
    return run_experiment(cfg)


class TestEmpiricalMse:
    def test_zero_errors(self):
        np.testing.assert_array_equal(empirical_mse(np.zeros((4, 6, 2))), np.zeros(6))

    def test_single_trial(self):
        err = np.zeros((1, 3, 2))
        err[0, 1] = (3.0, 4.0)
        np.testing.assert_array_equal(empirical_mse(err), [0.0, 25.0, 0.0])

    def test_streaming_matches_two_pass(self, rng):
        err = rng.normal(size=(50, 20, 3)) * rng.uniform(0.1, 10, size=(1, 20, 1))
        acc = MseAccumulator(20)
        for row in err:
            acc.add(row)
        two_pass = [sum(float(e @ e) for e in err[:, t]) / 50 for t in range(20)]
        np.testing.assert_allclose(acc.mse(), two_pass, rtol=1e-12)
        np.testing.assert_allclose(empirical_mse(err), two_pass, rtol=1e-12)

    def test_empty_accumulator(self):
        with pytest.raises(ValueError):
            MseAccumulator(3).mse()


class TestEpdf:
    def test_standard_normal_peak(self):
        x = np.random.default_rng(0).standard_normal(10_000)
        _, dens = epdf(x, grid=[0.0])
        assert abs(dens[0] - 1 / math.sqrt(2 * math.pi)) < 0.05

    def test_symmetric(self):
        x = np.random.default_rng(1).standard_normal(501)
        x = np.concatenate([x, -x])
        grid, dens = epdf(x)
        np.testing.assert_allclose(grid, -grid[::-1], atol=1e-12)
        np.testing.assert_allclose(dens, dens[::-1], rtol=1e-10, atol=1e-14)

    def test_two_point(self):
        grid, dens = epdf([-1.0, 1.0], points=2001)
        assert integral(grid, dens) == pytest.approx(1.0, abs=0.01)
        # closed-form two-kernel sum; IQR (= 1) / 1.34 is below the sd (sqrt 2)
        h = 0.9 * (1 / 1.34) * 2 ** -0.2
        want = (stats.norm.pdf(grid, -1, h) + stats.norm.pdf(grid, 1, h)) / 2
        np.testing.assert_allclose(dens, want, rtol=1e-12)
        assert dens[len(grid) // 2] < dens[np.argmin(abs(grid - 1))]

    def test_default_grid(self):
        x = np.random.default_rng(2).exponential(size=300)
        grid, dens = epdf(x)
        h = silverman_bandwidth(x)
        assert len(grid) == 100
        assert grid[0] == pytest.approx(x.min() - 4 * h) and grid[-1] == pytest.approx(x.max() + 4 * h)
        assert integral(grid, dens) == pytest.approx(1.0, abs=0.01)

    def test_bandwidth_iqr_fallback(self):
        # more than half the mass at one point: IQR is zero, sd is not
        x = np.array([0.0] * 8 + [1.0, 2.0])
        assert silverman_bandwidth(x) == pytest.approx(0.9 * np.std(x, ddof=1) * 10 ** -0.2)

    @pytest.mark.parametrize("x", [[1.0, 1.0, 1.0], [2.0]])
    def test_degenerate(self, x):
        with pytest.raises(DomainError):
            epdf(x)


class TestKs:
    def test_identical(self):
        x = np.random.default_rng(0).normal(size=100)
        assert stationarity_metric(x, x) == 0.0

    def test_disjoint(self):
        assert stationarity_metric([0.0, 1.0, 2.0], [5.0, 6.0]) == 1.0

    def test_same_distribution(self):
        vals = [stationarity_metric(np.random.default_rng(2 * k).normal(size=1000),
                                    np.random.default_rng(2 * k + 1).normal(size=1000)) for k in range(20)]
        assert np.mean(vals) < 0.08
        assert np.all((0 <= np.array(vals)) & (np.array(vals) <= 1))

    def test_empty(self):
        with pytest.raises(ValueError):
            stationarity_metric([], [1.0])


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"horizon": 0}, {"trials": 0}, {"delta": -1.0}, {"mu": 0.0}, {"mu": 1.5}, {"seed": -1},
        {"estimators": ("rseio", "ukf")}, {"channel": {"kind": "bernoulli", "gamma": 2.0}},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            SimConfig(**kw)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            SimConfig.from_dict({"trails": 5})

    def test_bad_number(self):
        with pytest.raises(ConfigError):
            SimConfig.from_dict({"horizon": "long"})

    def test_round_trip(self):
        cfg = SimConfig(horizon=7, p0_list=(1.0, [[2.0, 0.0], [0.0, 3.0]]), seed=9)
        back = SimConfig.from_dict(cfg.to_dict())
        assert back == cfg and back.config_hash() == cfg.config_hash()
        assert len(cfg.config_hash()) == 16
        assert with_overrides(cfg, seed=10).config_hash() != cfg.config_hash()
        assert with_overrides(cfg, seed=None, trials=3).trials == 3

    def test_p0_shapes(self):
        mats = SimConfig(p0_list=(2.0,)).p0_matrices(2)
        np.testing.assert_array_equal(mats[0], 2 * np.eye(2))
        with pytest.raises(ConfigError):
            SimConfig(p0_list=(np.eye(3).tolist(),)).p0_matrices(2)


class TestBatchEngine:
    def test_truth_matches_single_trial_simulator(self, bench):
        real = draw_realizations(bench, Bernoulli(0.7), 5.0, 30, seed=4, trials=[0, 1, 2])
        for row, trial in enumerate([0, 1, 2]):
            traj = simulate_truth(bench, 30, UniformError(5.0), _trial_seed(4, 0, trial))
            np.testing.assert_allclose(real.states[row], traj.states, rtol=1e-13, atol=1e-13)
            np.testing.assert_allclose(real.received[row], traj.received(real.gammas[row]), rtol=1e-13,
                                       atol=1e-13)

    @pytest.mark.parametrize("kind", list(EstimatorKind))
    def test_matches_scalar_filter(self, bench, kind):
        real = draw_realizations(bench, Bernoulli(0.6), 10.0, 40, seed=1, trials=range(4))
        xs, p_final, failed = batch_filter(bench, kind, real.gammas, real.received)
        assert not failed.any()
        for j in range(4):
            states = run_filter(bench, real.gammas[j], real.received[j], kind)
            np.testing.assert_allclose(xs[j], [s.x_hat for s in states], rtol=1e-10, atol=1e-10)
            np.testing.assert_allclose(p_final[j], states[-1].p_mat, rtol=1e-10)

    def test_failed_trial_flagged(self, bench):
        gam = np.ones((3, 5), dtype=np.int8)
        p0 = np.stack([np.eye(2), np.full((2, 2), np.nan), np.eye(2)])
        xs, _, failed = batch_filter(bench, EstimatorKind.RSEIO, gam, np.zeros((3, 5, 1)), p0=p0)
        assert failed.tolist() == [False, True, False]
        assert np.all(np.isfinite(xs))


class TestRunExperiment:
    def test_reduction_to_kalman(self):
        cfg = SimConfig(channel={"kind": "bernoulli", "gamma": 1.0}, delta=0.0, mu=1.0, horizon=1, trials=1)
        for seed in range(5):
            rep = run_experiment(with_overrides(cfg, seed=seed))
            np.testing.assert_array_equal(rep.mse["rseio"], rep.mse["kf"])

    def test_shapes_and_sign(self):
        rep = run_experiment(SimConfig(horizon=12, trials=20, seed=1))
        assert set(rep.mse) == {"rseio", "kfio", "kf", "rse"}
        for curve in rep.mse.values():
            assert curve.shape == (13,) and np.all(curve >= 0)
        assert rep.excluded_trials == 0
        assert rep.pcm_samples == {} and rep.ks_self is None

    def test_thread_count_does_not_matter(self):
        cfg = SimConfig(horizon=15, trials=13, seed=5, p0_list=(1.0, 5.0), calibration_pairs=1)
        one, three = run_experiment(cfg, threads=1), run_experiment(cfg, threads=3)
        assert one.metadata == three.metadata
        for k in one.mse:
            np.testing.assert_array_equal(one.mse[k], three.mse[k])
        for k in one.pcm_samples:
            np.testing.assert_array_equal(one.pcm_samples[k], three.pcm_samples[k])
        assert one.ks_self == three.ks_self

    def test_estimators_share_realizations(self):
        cfg = SimConfig(horizon=10, trials=6, seed=2)
        both = run_experiment(cfg)
        alone = run_experiment(with_overrides(cfg, estimators=("kf",)))
        assert both.metadata["realization_digest"] == alone.metadata["realization_digest"]
        np.testing.assert_array_equal(both.mse["kf"], alone.mse["kf"])

    def test_seed_changes_realizations(self):
        cfg = SimConfig(horizon=5, trials=3, estimators=("kf",))
        a, b = run_experiment(cfg), run_experiment(with_overrides(cfg, seed=1))
        assert a.metadata["realization_digest"] != b.metadata["realization_digest"]

    def test_stationarity_study(self, small_study):
        rep = small_study
        assert set(rep.pcm_samples) == {"0.1I", "10I"}
        for label, arr in rep.pcm_samples.items():
            assert arr.shape == (150 - rep.pcm_excluded[label], 2, 2)
        assert set(rep.ks) == {"0,0", "0,1", "1,1"}
        for mat in rep.ks.values():
            assert mat.shape == (2, 2) and np.all(np.diag(mat) == 0) and np.all(mat <= 1)
        assert 0 < rep.ks_self < 1
        for grid, dens in rep.epdf.values():
            assert integral(grid, dens) == pytest.approx(1.0, abs=0.01)

    def test_report_files_reproducible(self, small_study, tmp_path):
        cfg = small_study.config
        paths_a = small_study.write(tmp_path / "a")
        run_experiment(cfg).write(tmp_path / "b")
        names = sorted(p.rsplit("/", 1)[-1] for p in paths_a)
        assert names == ["epdf.csv", "mse.csv", "mse.gp", "pcm_samples.csv", "report.json"]
        for name in names:
            text = (tmp_path / "a" / name).read_bytes()
            assert text == (tmp_path / "b" / name).read_bytes()
            assert text.startswith(f"# config_hash={cfg.config_hash()} seed=3".encode()) or name == "report.json"
        rows = (tmp_path / "a" / "mse.csv").read_text().splitlines()
        assert rows[1] == "t,rseio,kfio,kf,rse" and len(rows) == 2 + 41

    def test_time_average(self, small_study):
        curve = small_study.mse["kf"]
        assert small_study.time_averaged_mse("kf", 10, 20) == pytest.approx(curve[10:21].mean())
