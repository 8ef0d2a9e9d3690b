import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from spatialprecoder.arrays import ApertureBasis, config_matrix, make_ula, make_uca
from spatialprecoder.precoder import (
    EigenmodeProfile,
    SingularModeProfileError,
    coherent_precoder,
    differential_precoder,
    eigenmodes,
    kkt_level_residuals,
    pep_bound_coherent,
    pep_bound_differential,
    waterfill_general,
    waterfill_miso,
    waterfill_three_rx,
    waterfill_two_rx,
)

from oracles import (
    allocation_objective,
    miso_active_set_enumeration,
    projected_gradient_allocation,
    random_feasible_allocations,
)


def rng_for(seed):
    return np.random.default_rng(seed)


def implied_level(t, r, q):
    i = int(np.argmax(q))
    return float(np.sum(np.asarray(r) * t[i] / (1.0 + np.asarray(r) * t[i] * q[i])))


def check_kkt(t, r, q, budget, tol=1e-8):
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    assert abs(q.sum() - budget) <= 1e-10 * budget
    assert np.all(q >= 0)
    level = implied_level(t, r, q)
    res = kkt_level_residuals(t, r, q, level)
    active = q > 1e-12 * max(q.max(), 1.0)
    assert np.abs(res[active]).max() <= tol
    # inactive modes: level already exceeds the zero-power marginal value
    if np.any(~active):
        assert np.all(level >= (t[~active] * r.sum()) - tol)
    # complementary slackness
    assert np.abs(q * res).max() <= tol


def unit_profile(n_tx, n_rx):
    return EigenmodeProfile(
        t=np.ones(n_tx), r=np.ones(n_rx), u_tx=np.eye(n_tx, dtype=complex)
    )


class TestEigenmodes:
    def test_orthonormal_rows_give_unit_gains(self):
        mat = np.linalg.qr(rng_for(0).standard_normal((5, 3)))[0].T.astype(complex)
        basis = ApertureBasis(matrix=mat, mode_order=2, aperture_radius=0.5)
        profile = eigenmodes(basis, basis)
        assert_allclose(profile.t, 1.0, atol=1e-12)

    def test_table_one_gain_counts(self):
        rx = config_matrix(make_ula(1, 0.1))
        for array, rank in [
            (make_ula(2, 0.2), 2),
            (make_uca(3, 0.2), 3),
            (make_ula(3, 0.2), 3),
            (make_uca(4, 0.2), 4),
            (make_ula(4, 0.2), 4),
        ]:
            profile = eigenmodes(config_matrix(array), rx)
            assert np.sum(profile.t > 1e-9 * profile.t.max()) == rank

    def test_matches_eigensolver_oracle(self):
        rng = rng_for(3)
        mat = rng.standard_normal((4, 9)) + 1j * rng.standard_normal((4, 9))
        basis = ApertureBasis(matrix=mat, mode_order=4, aperture_radius=1.0)
        profile = eigenmodes(basis, basis)
        expected = np.sort(np.linalg.eigvalsh(mat @ mat.conj().T))[::-1]
        assert np.abs(profile.t - expected).max() < 1e-10

    def test_rank_deficiency_warns(self):
        mat = np.zeros((2, 3), dtype=complex)
        mat[0, 0] = 1.0
        basis = ApertureBasis(matrix=mat, mode_order=1, aperture_radius=0.1)
        with pytest.warns(UserWarning):
            profile = eigenmodes(basis, basis)
        assert profile.tx_rank_deficient


class TestWaterfillMiso:
    def test_symmetric_split(self):
        assert_allclose(waterfill_miso([1.0, 1.0], 1.0), [0.5, 0.5], atol=1e-14)

    def test_two_mode_example(self):
        q = waterfill_miso([2.0, 1.0], 1.0)
        assert_allclose(q, [0.75, 0.25], atol=1e-12)
        # cross-check with the projected-gradient convex oracle
        q_pg = projected_gradient_allocation([2.0, 1.0], [1.0], 1.0)
        assert np.abs(q - q_pg).max() < 1e-4
        check_kkt(np.array([2.0, 1.0]), [1.0], q, 1.0)

    def test_small_budget_shuts_weak_mode(self):
        q = waterfill_miso([2.0, 1.0], 0.1)
        assert_allclose(q, [0.1, 0.0], atol=1e-12)
        assert_allclose(miso_active_set_enumeration([2.0, 1.0], 0.1), q, atol=1e-12)

    def test_matches_enumeration_oracle(self):
        rng = rng_for(7)
        for _ in range(50):
            t = rng.uniform(0.05, 3.0, rng.integers(2, 6))
            budget = rng.uniform(0.02, 20.0)
            assert_allclose(
                waterfill_miso(t, budget),
                miso_active_set_enumeration(t, budget),
                atol=1e-10,
            )

    def test_all_zero_gains_rejected(self):
        with pytest.raises(ValueError):
            waterfill_miso([0.0, 0.0], 1.0)


class TestWaterfillTwoRx:
    def test_equal_branches_reduce_algebraically(self):
        t = np.array([1.7, 0.9, 0.3])
        r = 1.3
        q = waterfill_two_rx(t, r, r, 2.0)
        level = implied_level(t, [r, r], q)
        expected = np.maximum(0.0, 2.0 / level - 1.0 / (r * t))
        assert np.abs(q - expected).max() < 1e-10

    def test_kkt_residuals(self):
        rng = rng_for(11)
        for _ in range(25):
            t = rng.uniform(0.05, 3.0, 4)
            r1, r2 = rng.uniform(0.05, 3.0, 2)
            budget = rng.uniform(0.05, 30.0)
            q = waterfill_two_rx(t, r1, r2, budget)
            check_kkt(t, [r1, r2], q, budget)

    def test_matches_general_solver(self):
        rng = rng_for(13)
        for _ in range(50):
            t = rng.uniform(0.05, 3.0, rng.integers(2, 7))
            r = rng.uniform(0.05, 3.0, 2)
            budget = rng.uniform(0.05, 30.0)
            a = waterfill_two_rx(t, r[0], r[1], budget)
            b = waterfill_general(t, r, budget)
            assert np.abs(a - b).max() < 1e-8


class TestWaterfillThreeRx:
    def test_equal_branches_reduce_algebraically(self):
        t = np.array([2.2, 1.0, 0.2])
        r = 0.8
        q = waterfill_three_rx(t, [r, r, r], 1.5)
        level = implied_level(t, [r] * 3, q)
        expected = np.maximum(0.0, 3.0 / level - 1.0 / (r * t))
        assert np.abs(q - expected).max() < 1e-10

    def test_cubic_root_residual(self):
        t = np.array([1.9, 0.7])
        r = np.array([1.4, 0.6, 0.3])
        q = waterfill_three_rx(t, r, 4.0)
        check_kkt(t, r, q, 4.0)

    def test_matches_general_solver(self):
        rng = rng_for(17)
        for _ in range(50):
            t = rng.uniform(0.05, 3.0, rng.integers(2, 7))
            r = rng.uniform(0.05, 3.0, 3)
            budget = rng.uniform(0.05, 30.0)
            a = waterfill_three_rx(t, r, budget)
            b = waterfill_general(t, r, budget)
            assert np.abs(a - b).max() < 1e-8


class TestWaterfillGeneral:
    def test_single_branch_equals_miso(self):
        rng = rng_for(19)
        for _ in range(100):
            t = rng.uniform(0.05, 3.0, rng.integers(2, 7))
            budget = rng.uniform(0.05, 30.0)
            a = waterfill_general(t, np.ones(1), budget)
            b = waterfill_miso(t, budget)
            assert np.abs(a - b).max() < 1e-10

    def test_unit_branches_example(self):
        q = waterfill_general([2.0, 1.0], [1.0, 1.0], 1.0)
        assert_allclose(q, [0.75, 0.25], atol=1e-10)
        level = implied_level(np.array([2.0, 1.0]), [1.0, 1.0], q)
        assert level == pytest.approx(1.6, abs=1e-10)

    def test_zero_receive_branches_drop_out(self):
        t = np.array([1.5, 0.8])
        a = waterfill_general(t, [1.2, 0.0, 0.0], 2.0)
        b = waterfill_general(t, [1.2], 2.0)
        assert np.abs(a - b).max() < 1e-10

    def test_budget_conservation_fuzz(self):
        rng = rng_for(23)
        for _ in range(100):
            t = rng.uniform(0.01, 3.0, rng.integers(2, 8))
            r = rng.uniform(0.05, 3.0, rng.integers(1, 6))
            budget = rng.uniform(0.02, 50.0)
            q = waterfill_general(t, r, budget)
            assert abs(q.sum() - budget) <= 1e-10 * budget

    def test_monotone_in_budget(self):
        rng = rng_for(29)
        for _ in range(30):
            t = rng.uniform(0.05, 3.0, 4)
            r = rng.uniform(0.05, 3.0, 2)
            small = rng.uniform(0.05, 5.0)
            q_small = waterfill_general(t, r, small)
            q_big = waterfill_general(t, r, small * rng.uniform(1.1, 4.0))
            assert np.all(q_big >= q_small - 1e-9)

    def test_support_ordering(self):
        rng = rng_for(31)
        for _ in range(30):
            t = rng.uniform(0.05, 3.0, 5)
            r = rng.uniform(0.05, 3.0, 2)
            q = waterfill_general(t, r, rng.uniform(0.05, 2.0))
            for i in range(5):
                if q[i] > 0:
                    assert np.all(q[t > t[i]] > 0)

    def test_asymptotic_equalisation(self):
        rng = rng_for(37)
        for _ in range(10):
            t = rng.uniform(0.1, 3.0, 4)
            r = rng.uniform(0.1, 3.0, 2)
            q = waterfill_general(t, r, 1000.0)
            ratios = q[:, None] / q[None, :]
            assert np.abs(ratios - 1.0).max() < 0.05

    @settings(max_examples=60, deadline=None)
    @given(
        t=st.lists(st.floats(0.05, 3.0), min_size=2, max_size=6),
        r=st.lists(st.floats(0.05, 3.0), min_size=1, max_size=4),
        budget=st.floats(0.05, 40.0),
    )
    def test_kkt_property(self, t, r, budget):
        q = waterfill_general(t, r, budget)
        check_kkt(np.asarray(t), np.asarray(r), q, budget)


class TestPrecoderAssembly:
    def profile_02(self):
        return eigenmodes(
            config_matrix(make_ula(2, 0.2)), config_matrix(make_ula(1, 0.1))
        )

    def test_equal_gains_give_identity_gram(self):
        profile = unit_profile(3, 2)
        sol = coherent_precoder(profile, 1.0, 2.0)
        gram = sol.matrix @ sol.matrix.conj().T
        assert_allclose(gram, np.eye(3), atol=1e-12)

    def test_trace_normalisation_fuzz(self):
        rng = rng_for(41)
        for _ in range(40):
            n_tx = int(rng.integers(2, 5))
            t = np.sort(rng.uniform(0.05, 3.0, n_tx))[::-1]
            u = np.linalg.qr(
                rng.standard_normal((n_tx, n_tx))
                + 1j * rng.standard_normal((n_tx, n_tx))
            )[0]
            profile = EigenmodeProfile(t=t, r=rng.uniform(0.1, 2.0, 2), u_tx=u)
            beta = rng.uniform(0.2, 4.0)
            snr = rng.uniform(0.05, 100.0)
            for solver in (coherent_precoder, differential_precoder):
                sol = solver(profile, beta, snr)
                trace = np.trace(sol.matrix @ sol.matrix.conj().T).real
                assert trace == pytest.approx(n_tx, rel=1e-10)

    def test_low_snr_eigen_beamforming(self):
        profile = self.profile_02()
        sol = coherent_precoder(profile, 1.0, 1.0)  # 0 dB
        assert sol.active_set == (0,)
        assert sol.allocation[0] == pytest.approx(0.5, abs=1e-10)
        check_kkt(profile.t, profile.r, sol.allocation, 0.5)

    def test_differential_budget(self):
        profile = self.profile_02()
        sol = differential_precoder(profile, 1.0, 9.0)
        assert sol.budget.value == pytest.approx(2 * 9.0 / 9.0)
        assert sol.budget.origin == "differential"

    def test_same_budget_same_allocation(self):
        profile = self.profile_02()
        beta = 1.0
        snr_c = 4.0
        # choose the differential SNR that equates the two budgets
        snr_d = snr_c * (8.0 + beta) / 4.0
        a = coherent_precoder(profile, beta, snr_c).allocation
        b = differential_precoder(profile, beta, snr_d).allocation
        assert np.abs(a - b).max() < 1e-9


class TestPepBounds:
    def test_zero_snr_limits(self):
        profile = unit_profile(2, 1)
        f = np.eye(2, dtype=complex)
        assert pep_bound_coherent(profile, f, 1.0, 1e-12) == pytest.approx(1.0)
        assert pep_bound_differential(profile, f, 1e-9, 1e-9) == pytest.approx(0.5)

    def test_iid_closed_form(self):
        for n_tx, n_rx in [(2, 1), (2, 2), (3, 2)]:
            profile = unit_profile(n_tx, n_rx)
            f = np.eye(n_tx, dtype=complex)
            beta, snr = 1.0, 6.3
            got = pep_bound_coherent(profile, f, beta, snr)
            assert got == pytest.approx(
                (1.0 + snr * beta / 4.0) ** (-n_tx * n_rx), rel=1e-12
            )
            got_d = pep_bound_differential(profile, f, beta, snr)
            expected_d = (
                0.5
                * ((8.0 + beta) / 8.0) ** (-n_tx * n_rx)
                * (1.0 + beta * snr / (8.0 + beta)) ** (-n_tx * n_rx)
            )
            assert got_d == pytest.approx(expected_d, rel=1e-12)

    def test_covariance_input_matches_profile(self):
        profile = eigenmodes(
            config_matrix(make_ula(2, 0.2)), config_matrix(make_ula(1, 0.1))
        )
        u = profile.u_tx
        cov = np.kron(np.eye(1), u @ np.diag(profile.t) @ u.conj().T)
        f = coherent_precoder(profile, 1.0, 2.0).matrix
        a = pep_bound_coherent(profile, f, 1.0, 2.0)
        b = pep_bound_coherent(cov, f, 1.0, 2.0)
        assert a == pytest.approx(b, rel=1e-10)

    def test_optimised_precoder_beats_diagonal_grid(self):
        rng = rng_for(43)
        for _ in range(10):
            n_tx = int(rng.integers(2, 4))
            t = np.sort(rng.uniform(0.1, 3.0, n_tx))[::-1]
            r = rng.uniform(0.1, 2.0, int(rng.integers(1, 3)))
            profile = EigenmodeProfile(
                t=t, r=r, u_tx=np.eye(n_tx, dtype=complex)
            )
            beta, snr = 1.0, rng.uniform(0.3, 30.0)
            sol = coherent_precoder(profile, beta, snr)
            best = pep_bound_coherent(profile, sol.matrix, beta, snr)
            assert best <= pep_bound_coherent(
                profile, np.eye(n_tx, dtype=complex), beta, snr
            ) + 1e-12
            scale = np.sqrt(4.0 / (beta * snr))
            for q in random_feasible_allocations(rng, n_tx, sol.budget.value, 300):
                f = scale * np.diag(np.sqrt(q))
                assert best <= pep_bound_coherent(profile, f, beta, snr) + 1e-12

    def test_objective_equals_log_bound(self):
        # minimising the negative sum-log objective is exactly minimising the bound
        profile = unit_profile(2, 2)
        t, r = profile.t, profile.r
        q = np.array([0.7, 0.3])
        f = np.diag(np.sqrt(q)).astype(complex)
        beta, snr = 4.0, 1.0  # coefficient snr*beta/4 = 1 makes F F^H carry q
        bound = pep_bound_coherent(profile, f, beta, snr)
        assert np.log(bound) == pytest.approx(
            allocation_objective(t, r, q), rel=1e-12
        )

    def test_singular_profile_raises(self):
        profile = EigenmodeProfile(
            t=np.array([1.0, 0.0]),
            r=np.ones(1),
            u_tx=np.eye(2, dtype=complex),
            tx_rank_deficient=True,
        )
        with pytest.raises(SingularModeProfileError):
            pep_bound_coherent(profile, np.eye(2, dtype=complex), 1.0, 1.0)
