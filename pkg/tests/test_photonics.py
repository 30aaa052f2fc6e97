import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mbspovm.errors import DimensionMismatchError, NotRankOneError, ValidationError, ZeroStateError, ZeroTransmissionError
from mbspovm.game import Strategy, protocol_strategy, score, score_breakdown, score_from_probabilities
from mbspovm.mbs import canonical_rank1_form, protocol_povm
from mbspovm.photonics import (
    AnalysisSetting,
    NoiseModel,
    PreparationSetting,
    analysis_basis,
    analysis_setting_for_projector,
    povm_probs,
    prepared_state,
    projective_probs,
    settings_for_state,
    simulate_counts,
)
from mbspovm.quantum_core import Povm, haar_unitary, ket_to_density, random_ket
from mbspovm.stats import PROJ, counts_to_probabilities

seeds = st.integers(0, 2**32 - 1)
FLAT = AnalysisSetting(np.ones(4), np.zeros(4))
UNIFORM = np.ones(4) / 2


@pytest.fixture(scope="module")
def protocol():
    return protocol_strategy()


def fidelity(a, b):
    return abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real)


class TestPreparation:
    def test_basis_state(self):
        np.testing.assert_allclose(prepared_state(PreparationSetting([1, 0, 0, 0], np.zeros(4))), [1, 0, 0, 0])

    def test_uniform(self):
        np.testing.assert_allclose(prepared_state(PreparationSetting(np.ones(4), np.zeros(4))), UNIFORM)

    def test_inverse_examples(self):
        s = settings_for_state([1, 0, 0, 0])
        np.testing.assert_array_equal(s.alpha, [1, 0, 0, 0])
        np.testing.assert_array_equal(s.phases, np.zeros(4))
        s = settings_for_state(UNIFORM)
        np.testing.assert_allclose(s.alpha, np.ones(4))
        np.testing.assert_allclose(s.phases, np.zeros(4))

    def test_protocol_states_round_trip(self, protocol):
        for psi in protocol.states:
            assert fidelity(prepared_state(settings_for_state(psi)), psi) >= 1 - 1e-10

    @given(seeds)
    def test_random_round_trip(self, seed):
        psi = random_ket(np.random.default_rng(seed), 4) * np.exp(1.3j)
        assert fidelity(prepared_state(settings_for_state(psi)), psi) >= 1 - 1e-10

    def test_validation(self):
        with pytest.raises(ZeroStateError):
            PreparationSetting(np.zeros(4), np.zeros(4))
        with pytest.raises(ValidationError):
            PreparationSetting([1.5, 0, 0, 0], np.zeros(4))
        with pytest.raises(DimensionMismatchError):
            PreparationSetting([1, 0, 0], np.zeros(3))
        with pytest.raises(ZeroStateError):
            settings_for_state(np.zeros(4))


class TestProjectiveProbs:
    def test_uniform_goes_to_first_detector(self):
        np.testing.assert_allclose(projective_probs(UNIFORM, FLAT), [1, 0, 0, 0], atol=1e-12)

    def test_single_core_splits_evenly(self):
        np.testing.assert_allclose(projective_probs([1, 0, 0, 0], FLAT), [0.25] * 4, atol=1e-12)

    def test_flat_setting_is_u4(self):
        from mbspovm.mbs import builtin_matrices

        u4 = builtin_matrices()["U4"].matrix
        basis = analysis_basis(FLAT)
        np.testing.assert_allclose(np.abs(basis.conj().T @ u4.conj().T), np.eye(4), atol=1e-12)

    def test_table_entry(self, protocol):
        a = analysis_setting_for_projector(protocol.dichotomic[3][1])
        p = projective_probs(protocol.states[5], a)
        assert 1 - p[0] == pytest.approx(0.8079, abs=1e-3)

    def test_matches_score_breakdown(self, protocol):
        t = score_breakdown(protocol)
        for y in range(7):
            a = analysis_setting_for_projector(protocol.dichotomic[y][1])
            for x in range(7):
                p1 = projective_probs(protocol.states[x], a)[0]
                expect = t.proj[x, y] if x == y else 1 - t.proj[x, y]
                assert p1 == pytest.approx(expect, abs=1e-9)

    @given(seeds)
    def test_normalized_and_phase_invariant(self, seed):
        rng = np.random.default_rng(seed)
        a = AnalysisSetting(rng.uniform(0.01, 1, 4), rng.uniform(-np.pi, np.pi, 4))
        psi = random_ket(rng, 4)
        p = projective_probs(psi, a)
        assert np.all(p >= 0)
        assert p.sum() == pytest.approx(1, abs=1e-8)
        np.testing.assert_allclose(projective_probs(psi * np.exp(0.7j), a), p, atol=1e-12)
        basis = analysis_basis(a)
        np.testing.assert_allclose(basis.conj().T @ basis, np.eye(4), atol=1e-10)

    @given(seeds)
    def test_detector_one_is_target(self, seed):
        rng = np.random.default_rng(seed)
        target = random_ket(rng, 4)
        a = analysis_setting_for_projector(ket_to_density(target))
        assert projective_probs(target, a)[0] == pytest.approx(1, abs=1e-10)

    def test_validation(self):
        with pytest.raises(ZeroTransmissionError):
            AnalysisSetting(np.zeros(4), np.zeros(4))
        with pytest.raises(NotRankOneError):
            analysis_setting_for_projector(np.diag([1.0, 1.0, 0, 0]))
        with pytest.raises(DimensionMismatchError):
            projective_probs([1, 0, 0], FLAT)
        with pytest.raises(ZeroStateError):
            projective_probs(np.zeros(4), FLAT)


class TestPovmProbs:
    def test_table_entry(self, protocol):
        assert povm_probs(protocol.states[6], protocol.final)[6] == pytest.approx(0.5799, abs=1e-3)

    def test_direction_gives_weight(self):
        form = canonical_rank1_form(protocol_povm())
        for b in range(7):
            assert povm_probs(form.directions[b], protocol_povm())[b] == pytest.approx(form.weights[b], abs=1e-9)

    def test_matches_breakdown(self, protocol):
        t = score_breakdown(protocol)
        for x in range(7):
            assert povm_probs(protocol.states[x], protocol.final)[x] == pytest.approx(t.povm[x], abs=1e-12)

    @given(seeds)
    def test_normalized(self, seed):
        rng = np.random.default_rng(seed)
        block = haar_unitary(rng, 7)[:4]
        p = povm_probs(random_ket(rng, 4), Povm.from_kets([block[:, j] for j in range(7)]))
        assert np.all(p >= 0) and p.sum() == pytest.approx(1, abs=1e-8)

    def test_dimension(self):
        with pytest.raises(DimensionMismatchError):
            povm_probs([1, 0], protocol_povm())


class TestSimulate:
    def test_layout_and_metadata(self, protocol):
        t = simulate_counts(protocol, NoiseModel(), 0)
        assert len(t.records) == 49 * 4 + 7 * 7
        assert t.metadata["shots_per_setting"] == 10_000
        assert t.metadata["visibility"] == 0.997

    def test_deterministic(self, protocol):
        a = simulate_counts(protocol, NoiseModel(), 5)
        b = simulate_counts(protocol, NoiseModel(), 5)
        assert a.records == b.records
        c = simulate_counts(protocol, NoiseModel(), 6)
        assert a.records != c.records

    def test_generator_input(self, protocol):
        a = simulate_counts(protocol, NoiseModel(), np.random.default_rng(1))
        b = simulate_counts(protocol, NoiseModel(), np.random.default_rng(1))
        assert a.records == b.records

    def test_zero_visibility_uniform(self, protocol):
        t = simulate_counts(protocol, NoiseModel(visibility=0.0, shots=10**6), 0)
        for (kind, _, _), counts in t.settings().items():
            p = counts / counts.sum()
            se = np.sqrt(p.size - 1) / p.size / 1e3
            assert np.all(np.abs(p - 1 / p.size) <= 5 * se)
            if kind == PROJ:
                assert p.size == 4

    def test_born_limit(self, protocol):
        t = counts_to_probabilities(simulate_counts(protocol, NoiseModel(visibility=1.0, shots=10**6), 0))
        truth = score_breakdown(protocol)
        se = np.sqrt(truth.proj * (1 - truth.proj) / 1e6) + 1e-9
        assert np.all(np.abs(t.proj - truth.proj) <= 3 * se + 1e-6)
        se = np.sqrt(truth.povm * (1 - truth.povm) / 1e6)
        assert np.all(np.abs(t.povm - truth.povm) <= 3 * se)

    @pytest.mark.filterwarnings("ignore::mbspovm.errors.DegenerateEstimateWarning")
    def test_unbiased_at_full_visibility(self, protocol):
        ws = [score_from_probabilities(counts_to_probabilities(simulate_counts(protocol, NoiseModel(visibility=1.0), s)))[0] for s in range(50)]
        se = np.std(ws, ddof=1) / np.sqrt(len(ws))
        assert abs(np.mean(ws) - score(protocol)) <= 3 * se

    @pytest.mark.filterwarnings("ignore::mbspovm.errors.DegenerateEstimateWarning")
    def test_noise_ordering(self, protocol):
        means = []
        for v in (1.0, 0.97, 0.9):
            ws = [score_from_probabilities(counts_to_probabilities(simulate_counts(protocol, NoiseModel(visibility=v), s)))[0] for s in range(10)]
            means.append(np.mean(ws))
        assert means[0] > means[1] > means[2]

    def test_default_within_three_sigma(self, protocol):
        w, sigma = score_from_probabilities(counts_to_probabilities(simulate_counts(protocol, NoiseModel(), 0)))
        assert abs(w - 62.6982) <= 3 * sigma

    def test_jitter_lowers_score(self, protocol):
        ws = [score_from_probabilities(counts_to_probabilities(simulate_counts(protocol, NoiseModel(visibility=1.0, phase_jitter=0.3), s)))[0] for s in range(5)]
        assert np.mean(ws) < score(protocol) - 0.1

    def test_rank_two_dichotomic_rejected(self, protocol):
        dich = list(protocol.dichotomic)
        dich[0] = Povm.dichotomic(np.diag([1.0, 1.0, 0, 0]))
        with pytest.raises(NotRankOneError):
            simulate_counts(Strategy(protocol.states, tuple(dich), protocol.final), NoiseModel(), 0)

    @pytest.mark.parametrize(
        "kwargs", [{"mu": 0}, {"shots": 0}, {"visibility": 1.2}, {"phase_jitter": -1}]
    )
    def test_noise_validation(self, kwargs):
        with pytest.raises(ValidationError):
            NoiseModel(**kwargs)
