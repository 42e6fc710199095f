import numpy as np
import pytest

from oracles import lst, mm, random_plant
from rseio.errors import ConfigError, NumericError
from rseio.plant import (
    PlantModel,
    Table,
    UniformError,
    ZeroError,
    plant_from_dict,
    sensitivity_matrices,
    simulate_truth,
)


class TestSensitivity:
    def test_zero_jacobians_give_zero_blocks(self, rng):
        pl = PlantModel(rng.normal(size=(3, 3)), rng.normal(size=(3, 2)), rng.normal(size=(2, 3)),
                        np.eye(2), np.eye(2), np.eye(3))
        sens = sensitivity_matrices(pl, 0)
        assert sens.s_mat.shape == (4, 3) and sens.t_mat.shape == (4, 2)
        assert not sens.s_mat.any() and not sens.t_mat.any()

    def test_benchmark_plant(self, bench):
        sens = sensitivity_matrices(bench, 0)
        np.testing.assert_allclose(sens.s_mat, [[0.0, 0.099], [0.0, 0.0]], atol=1e-15)
        np.testing.assert_array_equal(sens.t_mat, np.zeros((2, 2)))

    def test_benchmark_constant_in_time(self, bench):
        s0 = sensitivity_matrices(bench, 0)
        s9 = sensitivity_matrices(bench, 9)
        np.testing.assert_array_equal(s0.s_mat, s9.s_mat)
        np.testing.assert_array_equal(s0.t_mat, s9.t_mat)

    def test_matches_blockwise_loop(self, rng):
        pl = random_plant(rng, n=3, m=2, p=2, n_e=2)
        sens = sensitivity_matrices(pl, 4)
        assert sens.s_mat.shape == (2 * 2 * 2, 3)
        rows_s, rows_t = [], []
        for k in range(2):
            rows_s += mm(lst(pl.C(5)), lst(pl.dA(4)[k])) + mm(lst(pl.dC(5)[k]), lst(pl.A(4)))
            rows_t += mm(lst(pl.C(5)), lst(pl.dB(4)[k])) + mm(lst(pl.dC(5)[k]), lst(pl.B(4)))
        np.testing.assert_allclose(sens.s_mat, rows_s, rtol=1e-13, atol=1e-13)
        np.testing.assert_allclose(sens.t_mat, rows_t, rtol=1e-13, atol=1e-13)

    def test_linear_in_jacobians(self, rng):
        pl = random_plant(rng)
        doubled = PlantModel(pl.A(0), pl.B(0), pl.C(0), pl.Q(0), pl.R(0), pl.p0,
                             da=2 * pl.dA(0), db=2 * pl.dB(0), dc=2 * pl.dC(0))
        s1, s2 = sensitivity_matrices(pl, 0), sensitivity_matrices(doubled, 0)
        np.testing.assert_allclose(s2.s_mat, 2 * s1.s_mat, rtol=1e-14)
        np.testing.assert_allclose(s2.t_mat, 2 * s1.t_mat, rtol=1e-14)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ConfigError):
            PlantModel(np.eye(2), np.eye(2), np.ones((1, 2)), np.eye(2), np.eye(1), np.eye(2),
                       da=np.zeros((1, 3, 3)))

    def test_error_dimension_disagreement(self):
        with pytest.raises(ConfigError, match="error dimension"):
            PlantModel(np.eye(2), np.eye(2), np.ones((1, 2)), np.eye(2), np.eye(1), np.eye(2),
                       da=np.zeros((1, 2, 2)), db=np.zeros((2, 2, 2)))


class TestValidation:
    @pytest.mark.parametrize("bad", [np.diag([1.0, 0.0]), np.diag([1.0, -1.0]), np.diag([1.0, 1e-14])])
    def test_non_pd_covariance_rejected(self, bad):
        with pytest.raises(NumericError):
            PlantModel(np.eye(2), np.eye(2), np.ones((1, 2)), bad, np.eye(1), np.eye(2))

    def test_asymmetric_input_is_symmetrized(self):
        q = np.array([[2.0, 0.1], [0.3, 2.0]])
        pl = PlantModel(np.eye(2), np.eye(2), np.ones((1, 2)), q, np.eye(1), np.eye(2))
        np.testing.assert_array_equal(pl.Q(0), pl.Q(0).T)
        assert pl.Q(0)[0, 1] == pytest.approx(0.2)

    @pytest.mark.parametrize("mu", [0.0, -0.1, 1.5])
    def test_mu_range(self, mu):
        with pytest.raises(ConfigError):
            PlantModel(np.eye(1), np.eye(1), np.eye(1), np.eye(1), np.eye(1), np.eye(1), mu=mu)

    def test_lambda(self, bench):
        assert bench.lam(0) == pytest.approx(0.25)
        assert bench.with_mu(1.0).lam(3) == 0.0

    def test_table_schedule_bounds(self):
        pl = PlantModel(Table([np.eye(1), 2 * np.eye(1)]), np.eye(1), np.eye(1), np.eye(1), np.eye(1),
                        np.eye(1))
        assert pl.A(1)[0, 0] == 2.0
        assert not pl.is_lti
        with pytest.raises(ConfigError, match="out of range"):
            pl.A(2)

    def test_table_with_bad_covariance_reports_time(self):
        with pytest.raises(NumericError, match="t=1"):
            PlantModel(np.eye(1), np.eye(1), np.eye(1), Table([[[1.0]], [[-1.0]]]), np.eye(1), np.eye(1))


class TestJsonPlant:
    def test_benchmark_keyword(self):
        pl = plant_from_dict("benchmark")
        assert (pl.n, pl.m, pl.p, pl.n_e) == (2, 2, 1, 1)

    def test_custom_with_table(self):
        spec = {"A": {"schedule": "table", "values": [[[0.5]], [[0.6]]]}, "B": [[1]], "C": [[1]],
                "Q": [[1]], "R": [[1]], "P0": [[1]], "dA": [[[0.1]]], "mu": 0.9}
        pl = plant_from_dict(spec)
        assert pl.A(1)[0, 0] == 0.6 and pl.dA(0).shape == (1, 1, 1)

    @pytest.mark.parametrize("spec", [
        {"A": [[1]]},
        {"A": [[1]], "B": [[1]], "C": [[1]], "Q": [[1]], "R": [[1]], "P0": [[1]], "bogus": 1},
        {"A": "x", "B": [[1]], "C": [[1]], "Q": [[1]], "R": [[1]], "P0": [[1]]},
        {"A": {"schedule": "cubic"}, "B": [[1]], "C": [[1]], "Q": [[1]], "R": [[1]], "P0": [[1]]},
        {"A": [[1]], "B": [[1]], "C": [[1]], "Q": [[-1]], "R": [[1]], "P0": [[1]]},
        [1, 2],
    ])
    def test_schema_errors(self, spec):
        with pytest.raises(ConfigError):
            plant_from_dict(spec)


class TestSimulateTruth:
    def test_noise_free_limit(self, bench):
        tiny = 1e-290
        pl = PlantModel(bench.A(0), bench.B(0), bench.C(0), tiny * np.eye(2), tiny * np.eye(1),
                        tiny * np.eye(2), x0_mean=[1.0, -2.0], da=bench.dA(0))
        tr = simulate_truth(pl, 20, ZeroError(), rng_seed=1)
        x = np.array([1.0, -2.0])
        for t in range(21):
            np.testing.assert_allclose(tr.states[t], x, atol=1e-140)
            x = bench.A(0) @ x

    def test_deterministic(self, bench):
        a = simulate_truth(bench, 30, UniformError(10.0), rng_seed=5)
        b = simulate_truth(bench, 30, UniformError(10.0), rng_seed=5)
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.outputs, b.outputs)
        c = simulate_truth(bench, 30, UniformError(10.0), rng_seed=6)
        assert not np.array_equal(a.states, c.states)

    def test_zero_error_gives_nominal_dynamics(self, bench):
        tr = simulate_truth(bench, 15, ZeroError(), rng_seed=3)
        np.testing.assert_array_equal(tr.eps, 0.0)
        np.testing.assert_array_equal(tr.clean_outputs, tr.states @ bench.C(0).T)

    def test_uses_perturbed_matrices(self, bench):
        tr = simulate_truth(bench, 10, UniformError(10.0), rng_seed=2)
        assert np.all(np.abs(tr.eps) <= 10.0) and tr.eps.shape == (11, 1)
        x_next = bench.perturbed(0, tr.eps[0])[0] @ tr.states[0]
        w0 = tr.states[1] - x_next
        tr0 = simulate_truth(bench, 10, ZeroError(), rng_seed=2)
        w0_nominal = tr0.states[1] - bench.A(0) @ tr0.states[0]
        np.testing.assert_allclose(w0, w0_nominal, atol=1e-12)

    def test_received_signal(self, bench):
        tr = simulate_truth(bench, 5, UniformError(1.0), rng_seed=4)
        y = tr.received([1, 0, 1, 1, 0])
        np.testing.assert_array_equal(y[1], tr.noise_v[2])
        np.testing.assert_allclose(y[0], tr.outputs[1])

    def test_process_noise_covariance(self, bench):
        # eps = 0, B = I: w_t = x_{t+1} - A x_t exactly
        tr = simulate_truth(bench, 100_000, ZeroError(), rng_seed=11)
        w = tr.states[1:] - tr.states[:-1] @ bench.A(0).T
        emp = w.T @ w / len(w)
        assert np.linalg.norm(emp - bench.Q(0)) / np.linalg.norm(bench.Q(0)) < 0.03

    def test_horizon_must_be_positive(self, bench):
        with pytest.raises(ValueError):
            simulate_truth(bench, 0)
