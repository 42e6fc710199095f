import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_spd, tame_plant
from rseio.analysis import (
    DropoutPattern,
    analysis_matrices,
    build_Cn,
    build_Ob,
    classify_hamiltonian,
    sufficient_conditions,
    estimate_contraction,
    estimate_expected_log_lipschitz,
    product_membership,
    rank_full,
    riemannian_distance,
)
from rseio.channel import Bernoulli
from rseio.errors import DomainError, UnsupportedConfigError
from rseio.pcm import HamiltonianBlock, build_phi
from rseio.plant import PlantModel, plant_from_dict


def explicit_product(phis):
    acc = phis[0]
    for phi in phis[1:]:
        acc = acc @ phi
    return acc


def step_phis(model, gammas):
    return [build_phi(model, t, g) for t, g in enumerate(gammas)]


@pytest.fixture
def scalar_plant():
    return PlantModel([[0.9]], [[1.0]], [[1.0]], [[1.0]], [[1.0]], [[1.0]])


class TestDistance:
    def test_self_distance(self, rng):
        p = random_spd(rng, 3)
        assert riemannian_distance(p, p) == pytest.approx(0.0, abs=1e-7)

    def test_scaled_identity(self):
        assert riemannian_distance(2 * np.eye(2), np.eye(2)) == pytest.approx(math.sqrt(2) * math.log(2), abs=1e-12)
        assert riemannian_distance(2 * np.eye(2), np.eye(2)) == pytest.approx(0.98026, abs=1e-5)

    @pytest.mark.parametrize("seed", range(10))
    def test_invariances(self, seed):
        rng = np.random.default_rng(seed)
        p, q = random_spd(rng, 3), random_spd(rng, 3)
        m = rng.normal(size=(3, 3))
        d = riemannian_distance(p, q)
        assert riemannian_distance(q, p) == pytest.approx(d, rel=1e-10)
        assert riemannian_distance(m @ p @ m.T, m @ q @ m.T) == pytest.approx(d, rel=1e-8)
        assert riemannian_distance(np.linalg.inv(p), np.linalg.inv(q)) == pytest.approx(d, rel=1e-10)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_triangle_inequality(self, seed):
        rng = np.random.default_rng(seed)
        p, q, r = (random_spd(rng, 2) for _ in range(3))
        assert riemannian_distance(p, r) <= riemannian_distance(p, q) + riemannian_distance(q, r) + 1e-10

    def test_rejects_non_pd(self):
        with pytest.raises(DomainError):
            riemannian_distance(np.diag([1.0, 0.0]), np.eye(2))
        with pytest.raises(DomainError):
            riemannian_distance(np.eye(2), np.eye(3))


class TestClassify:
    def test_prediction_step(self, bench):
        cls = classify_hamiltonian(build_phi(bench, 0, 0))
        assert cls.in_h and cls.in_hr and not cls.in_hl

    def test_arrival_step(self, bench):
        cls = classify_hamiltonian(build_phi(bench, 0, 1))
        assert cls.in_h and cls.in_hl and cls.in_hlr

    def test_identity(self):
        cls = classify_hamiltonian(HamiltonianBlock.identity(2))
        assert cls.as_dict() == {"in_h": True, "in_hl": False, "in_hr": False, "in_hlr": False}

    def test_not_symplectic(self):
        assert not classify_hamiltonian(HamiltonianBlock(2 * np.eye(4))).in_h

    def test_wrong_sign(self):
        phi = HamiltonianBlock.from_blocks(np.eye(2), -np.eye(2), np.zeros((2, 2)), np.eye(2))
        assert phi.symplectic_residual() < 1e-15
        assert not classify_hamiltonian(phi).in_h

    def test_all_prediction_sequence_never_left(self, bench):
        for n in range(1, 8):
            assert not product_membership(step_phis(bench, [0] * n)).in_hl

    @pytest.mark.parametrize("seed", range(5))
    def test_sum_criteria_match_explicit_product(self, seed):
        rng = np.random.default_rng(seed)
        for n in (2, 3):
            pl = tame_plant(rng, n, with_sensitivity=False)
            for gammas in itertools.product((0, 1), repeat=5):
                phis = step_phis(pl, gammas)
                a = product_membership(phis)
                b = classify_hamiltonian(explicit_product(phis))
                assert a == b, gammas

    def test_empty_product_rejected(self):
        with pytest.raises(ValueError):
            product_membership([])


class TestRank:
    @pytest.mark.parametrize("matrix,mode,want", [
        (np.eye(3), "column", True),
        (np.ones((3, 2)), "column", False),
        (np.array([[1.0, 0.0], [0.0, 1e-20]]), "column", False),
        (np.ones((1, 3)), "row", True),
        (np.zeros((0, 2)), "column", False),
        (np.zeros((2, 0)), "column", True),
    ])
    def test_examples(self, matrix, mode, want):
        assert rank_full(matrix, mode) is want

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            rank_full(np.eye(2), "diag")


class TestStructuralMatrices:
    def test_classical_collapse(self, rng):
        # every step an arrival: O_b is the observability matrix of (A1, H1)
        pl = tame_plant(rng, 3)
        mats = analysis_matrices(pl)
        ob = build_Ob(pl, DropoutPattern((1, 2, 3), 3))
        want = np.vstack([mats.h1, mats.h1 @ mats.a1, mats.h1 @ mats.a1 @ mats.a1])
        np.testing.assert_allclose(ob, want, rtol=1e-14)
        cn = build_Cn(pl, DropoutPattern((1, 2, 3), 3))
        want = np.hstack([mats.g1, mats.a1 @ mats.g1, mats.a1 @ mats.a1 @ mats.g1])
        np.testing.assert_allclose(cn, want, rtol=1e-14)

    def test_hand_assembled_pattern(self, rng):
        pl = tame_plant(rng, 3)
        m = analysis_matrices(pl)
        pat = DropoutPattern((1, 3), 3)
        assert pat.gammas == (1, 0, 1)
        # gaps: t1 - t0 - 1 = 0, t2 - t1 - 1 = 1; latest gap first
        want = np.vstack([m.h1, m.h1 @ m.a1 @ m.a2])
        np.testing.assert_allclose(build_Ob(pl, pat), want, rtol=1e-14)
        want = np.hstack([m.g1, m.a1 @ m.g2, m.a1 @ m.a2 @ m.g1])
        np.testing.assert_allclose(build_Cn(pl, pat), want, rtol=1e-14)

    def test_no_arrivals(self, bench):
        assert build_Ob(bench, DropoutPattern((), 4)).shape == (0, 2)
        assert not rank_full(build_Ob(bench, DropoutPattern((), 4)))

    @pytest.mark.parametrize("ts,n", [((2, 1), 3), ((0,), 2), ((4,), 3)])
    def test_pattern_validation(self, ts, n):
        with pytest.raises(ValueError):
            DropoutPattern(ts, n)

    @pytest.mark.parametrize("n", [2, 3])
    def test_rank_tests_match_membership(self, n):
        rng = np.random.default_rng(100 + n)
        agree = total = 0
        hits_l = hits_r = 0
        for _ in range(60):
            pl = tame_plant(rng, n, with_sensitivity=bool(rng.integers(0, 2)))
            gammas = tuple(int(g) for g in rng.integers(0, 2, size=rng.integers(1, 9)))
            pat = DropoutPattern.from_gammas(gammas)
            cls = product_membership(step_phis(pl, gammas))
            ob, cn = rank_full(build_Ob(pl, pat), "column"), rank_full(build_Cn(pl, pat), "row")
            agree += (ob == cls.in_hl) + (cn == cls.in_hr)
            total += 2
            hits_l += cls.in_hl
            hits_r += cls.in_hr
        assert agree == total
        # both outcomes occur, so the agreement is not vacuous
        assert 0 < hits_l < 60 and 0 < hits_r < 60

    def test_time_varying_plant_rejected(self):
        spec = {"A": {"schedule": "table", "values": [[[0.9]], [[0.8]]]},
                "B": [[1.0]], "C": [[1.0]], "Q": [[1.0]], "R": [[1.0]], "P0": [[1.0]]}
        with pytest.raises(UnsupportedConfigError):
            analysis_matrices(plant_from_dict(spec))


class TestSufficientConditions:
    def test_benchmark(self, bench):
        rep = sufficient_conditions(bench)
        assert rep.hl_sufficient and rep.hr_sufficient and rep.ctrb_a2_g2
        assert rep.as_dict()["hlr_sufficient"] is True

    def test_scalar(self, scalar_plant):
        rep = sufficient_conditions(scalar_plant)
        assert rep.obs_a1a2m_h1 == (0,) and rep.ctrb_a1a2m_g1 == (0,) and rep.ctrb_a2m_a1_g2 == (0,)
        assert rep.ctrb_a2_g2

    def test_zero_output(self):
        pl = PlantModel(np.diag([0.9, 0.5]), np.eye(2), np.zeros((1, 2)), np.eye(2), np.eye(1), np.eye(2))
        rep = sufficient_conditions(pl)
        assert not rep.hl_sufficient and rep.obs_a1a2m_h1 == ()
        assert rep.hr_sufficient

    def test_rank_one_input(self):
        # decoupled modes, input reaches only the first one
        pl = PlantModel(np.diag([0.9, 0.5]), [[1.0], [0.0]], [[1.0, 1.0]], [[1.0]], [[1.0]], np.eye(2))
        rep = sufficient_conditions(pl)
        assert rep.hl_sufficient and not rep.hr_sufficient


class TestContraction:
    def test_empty_sequence(self, bench):
        stats = estimate_contraction(bench, [], trials=50, rng_seed=0)
        assert stats.max == 1.0 and stats.mean == 1.0

    def test_h_only_is_nonexpansive(self):
        pl = PlantModel(np.diag([0.9, 1.1]), [[1.0], [0.0]], [[1.0, 0.0]], [[1.0]], [[1.0]], np.eye(2))
        cls = classify_hamiltonian(build_phi(pl, 0, 0))
        assert cls.in_h and not cls.in_hl and not cls.in_hr
        stats = estimate_contraction(pl, [0], trials=1000, rng_seed=1)
        assert stats.max <= 1 + 1e-9

    def test_strict_class_contracts(self, bench):
        gammas = [1, 0, 1, 1, 0, 1]
        assert product_membership(step_phis(bench, gammas)).in_hlr
        stats = estimate_contraction(bench, gammas, trials=1000, rng_seed=2)
        assert stats.max < 1
        assert stats.quantiles[0.05] <= stats.quantiles[0.5] <= stats.quantiles[0.95]

    def test_log_lipschitz_full_arrivals(self, bench):
        est = estimate_expected_log_lipschitz(bench, Bernoulli(1.0), 4, sequence_samples=10,
                                              pair_samples=50, rng_seed=3)
        assert est.mean < 0 and est.strictly_negative

    def test_log_lipschitz_reproducible(self, bench):
        kw = dict(sequence_samples=8, pair_samples=20, rng_seed=11)
        a = estimate_expected_log_lipschitz(bench, Bernoulli(0.5), 3, **kw)
        b = estimate_expected_log_lipschitz(bench, Bernoulli(0.5), 3, **kw)
        assert a == b

    def test_log_lipschitz_needs_steps(self, bench):
        with pytest.raises(ValueError):
            estimate_expected_log_lipschitz(bench, Bernoulli(0.5), 0)
