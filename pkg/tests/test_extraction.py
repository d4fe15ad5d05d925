import numpy as np
import numpy.testing as npt
import pytest

from markovls import (HankelBlock, IllSeparatedRankWarning,
                      RankDeficiencyError, StateSpaceModel, ho_kalman_extract,
                      markov_noise, predictor_markov, recursive_extract,
                      to_predictor)

from conftest import random_system


def predictor_noise_blocks(sys, count):
    """Exact blocks in increasing-power order, gain response first."""
    _, h_seq = predictor_markov(to_predictor(sys), count + 1)
    return list(h_seq.blocks[:-1])[::-1]


def open_loop_blocks(sys, count):
    return list(markov_noise(sys, count + 1).blocks[1:])


class TestRecursive:
    def test_base_case_passthrough(self):
        blocks = [np.array([[0.7]])]
        npt.assert_array_equal(recursive_extract(blocks)[0], blocks[0])

    def test_scalar_chain_golden(self):
        # one hand-evaluated step of the recursion
        out = recursive_extract([np.array([[0.5]]), np.array([[0.3]])])
        npt.assert_allclose(out[1], [[0.55]], atol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_end_to_end_exact_inputs(self, seed):
        sys = random_system(np.random.default_rng(seed), n_x=3, n_u=1, n_y=1)
        out = recursive_extract(predictor_noise_blocks(sys, 10))
        expected = open_loop_blocks(sys, 10)
        for got, want in zip(out, expected):
            assert np.abs(got - want).max() <= 1e-10 * max(1.0, np.abs(want).max())

    def test_mimo_exact_inputs(self, mimo):
        out = recursive_extract(predictor_noise_blocks(mimo, 8))
        for got, want in zip(out, open_loop_blocks(mimo, 8)):
            npt.assert_allclose(got, want, atol=1e-12)

    def test_count_validation(self):
        blocks = [np.eye(1)] * 3
        assert len(recursive_extract(blocks, count=2)) == 2
        with pytest.raises(ValueError):
            recursive_extract(blocks, count=4)
        with pytest.raises(ValueError):
            recursive_extract(blocks, count=0)

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            recursive_extract([np.zeros((1, 2))])


class TestHoKalman:
    def test_exact_siso_benchmark(self, siso):
        out = ho_kalman_extract(predictor_noise_blocks(siso, 10), n_x=2)
        for got, want in zip(out, open_loop_blocks(siso, 10)):
            assert np.abs(got - want).max() <= 1e-8

    def test_one_state_exact(self):
        sys = StateSpaceModel(A=[[0.6]], B=[[1.0]], C=[[2.0]], D=[[0.0]],
                              K=[[0.5]])
        out = ho_kalman_extract(predictor_noise_blocks(sys, 6), n_x=1)
        for got, want in zip(out, open_loop_blocks(sys, 6)):
            assert np.abs(got - want).max() <= 1e-10

    def test_zero_blocks_rank_error(self):
        with pytest.raises(RankDeficiencyError):
            ho_kalman_extract([np.zeros((1, 1))] * 4, n_x=1)

    def test_order_exceeding_rank_rejected(self):
        sys = StateSpaceModel(A=[[0.6]], B=[[1.0]], C=[[2.0]], D=[[0.0]],
                              K=[[0.5]])
        with pytest.raises(RankDeficiencyError):
            ho_kalman_extract(predictor_noise_blocks(sys, 8), n_x=3)

    def test_too_few_blocks_rejected(self, siso):
        with pytest.raises(ValueError, match="at least"):
            ho_kalman_extract(predictor_noise_blocks(siso, 3), n_x=2)

    def test_ill_separated_order_warns(self):
        blocks = [np.eye(1), np.zeros((1, 1)), np.eye(1), np.zeros((1, 1))]
        with pytest.warns(IllSeparatedRankWarning):
            ho_kalman_extract(blocks, n_x=1)

    def test_realization_diagnostics(self, mimo):
        out, realization = ho_kalman_extract(predictor_noise_blocks(mimo, 9),
                                             n_x=4, return_realization=True)
        assert realization.residual <= 1e-10
        assert realization.singular_values_retained.shape == (4,)
        assert np.all(np.diff(realization.singular_values_retained) <= 0)
        doc = realization.to_dict()
        assert doc["residual"] == realization.residual
        a_open = realization.predictor_dynamics + realization.gain @ realization.output_map
        npt.assert_allclose(realization.dynamics, a_open, atol=1e-12)

    def test_count_extension_from_realization(self, siso):
        out = ho_kalman_extract(predictor_noise_blocks(siso, 10), n_x=2, count=12)
        assert len(out) == 12
        for got, want in zip(out, open_loop_blocks(siso, 12)):
            assert np.abs(got - want).max() <= 1e-7


class TestSimilarityInvariance:
    @pytest.mark.parametrize("method", ["recursive", "ho-kalman"])
    def test_basis_change_leaves_output_unchanged(self, siso, method):
        rng = np.random.default_rng(30)
        basis = rng.standard_normal((2, 2)) + 2 * np.eye(2)
        inv = np.linalg.inv(basis)
        transformed = StateSpaceModel(A=basis @ siso.A @ inv, B=basis @ siso.B,
                                      C=siso.C @ inv, D=siso.D, K=basis @ siso.K)
        ref_blocks = predictor_noise_blocks(siso, 10)
        alt_blocks = predictor_noise_blocks(transformed, 10)
        if method == "recursive":
            ref = recursive_extract(ref_blocks)
            alt = recursive_extract(alt_blocks)
        else:
            ref = ho_kalman_extract(ref_blocks, n_x=2)
            alt = ho_kalman_extract(alt_blocks, n_x=2)
        for a, b in zip(ref, alt):
            assert np.abs(a - b).max() <= 1e-9 * max(1.0, np.abs(a).max())


class TestAgreement:
    @pytest.mark.parametrize("seed", range(4))
    def test_extractors_agree_on_exact_inputs(self, seed):
        rng = np.random.default_rng(seed + 200)
        sys = random_system(rng, n_x=2, n_u=1, n_y=2)
        blocks = predictor_noise_blocks(sys, 10)
        rec = recursive_extract(blocks)
        hok = ho_kalman_extract(blocks, n_x=2)
        for a, b in zip(rec, hok):
            assert np.abs(a - b).max() <= 1e-8 * max(1.0, np.abs(a).max())


class TestNoisyConsistency:
    def test_recursive_beats_realization_on_average(self, siso):
        # statistical comparison on estimated predictor blocks: the SVD
        # truncation costs the realization route a little accuracy
        from markovls import SimConfig, assemble_predictor, predictor_ls, simulate

        truth = np.hstack(open_loop_blocks(siso, 9))
        rec_errs, hok_errs = [], []
        for seed in range(50):
            data = simulate(siso, SimConfig(500, 10, seed=seed))
            _, h_hat = predictor_ls(assemble_predictor(data))
            blocks = list(h_hat.blocks[:-1])[::-1]
            rec = np.hstack(recursive_extract(blocks))
            hok = np.hstack(ho_kalman_extract(blocks, n_x=2))
            rec_errs.append(np.linalg.norm(rec - truth))
            hok_errs.append(np.linalg.norm(hok - truth))
        assert np.mean(rec_errs) <= np.mean(hok_errs)


class TestHankelBlock:
    def test_structure(self):
        blocks = [np.full((1, 1), float(k)) for k in range(5)]
        h = HankelBlock.from_sequence(blocks, 2, 3)
        npt.assert_array_equal(h.entries, [[0, 1, 2], [1, 2, 3]])
        h_shift = HankelBlock.from_sequence(blocks, 2, 3, shift=1)
        npt.assert_array_equal(h_shift.entries, [[1, 2, 3], [2, 3, 4]])

    def test_length_guard(self):
        blocks = [np.eye(1)] * 3
        with pytest.raises(ValueError):
            HankelBlock.from_sequence(blocks, 2, 3)
