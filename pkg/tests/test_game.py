import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mbspovm.errors import DimensionMismatchError, MissingEntryError, ValidationError
from mbspovm.game import (
    MAX_SCORE,
    ProbabilityTables,
    Strategy,
    load_strategy,
    protocol_strategy,
    save_strategy,
    score,
    score_breakdown,
    score_density,
    score_from_probabilities,
    strategy_from_json,
    strategy_to_json,
    tables_from_csv,
    tables_to_csv,
)
from mbspovm.quantum_core import Povm, haar_unitary, ket_to_density, random_ket
from mbspovm.stats import golden_tables

seeds = st.integers(0, 2**32 - 1)


def random_strategy(rng) -> Strategy:
    states = tuple(random_ket(rng, 4) for _ in range(7))
    dich = []
    for _ in range(7):
        u = haar_unitary(rng, 4)
        e = u @ np.diag(rng.uniform(0, 1, 4)) @ u.conj().T
        dich.append(Povm((np.eye(4) - e, e)))
    block = haar_unitary(rng, 7)[:4]
    final = Povm.from_kets([block[:, j] for j in range(7)])
    return Strategy(states, tuple(dich), final)


def oracle_score(s: Strategy) -> float:
    rhos = np.array([ket_to_density(v) for v in s.states])
    e1 = np.array([m[1] for m in s.dichotomic])
    m = np.array(list(s.final))
    p1 = np.real(np.einsum("xij,yji->xy", rhos, e1))
    diag = np.trace(p1)
    off = np.sum(1 - p1) - np.sum(1 - np.diag(p1))
    final = np.real(np.einsum("xij,xji->", rhos, m))
    return 2 * diag + off + 3 * final


@pytest.fixture(scope="module")
def protocol():
    return protocol_strategy()


class TestScore:
    def test_protocol_value(self, protocol):
        assert score(protocol) == pytest.approx(62.6982, abs=1e-3)

    def test_uniform_final_contributes_three(self, rng):
        s = random_strategy(rng)
        uniform = Strategy(s.states, s.dichotomic, Povm.uniform(4, 7))
        assert 3 * np.sum(score_breakdown(uniform).povm) == pytest.approx(3.0, abs=1e-12)

    @given(seeds)
    def test_matches_oracle_and_range(self, seed):
        s = random_strategy(np.random.default_rng(seed))
        w = score(s)
        assert w == pytest.approx(oracle_score(s), abs=1e-12)
        assert 0 <= w <= MAX_SCORE

    @given(seeds)
    def test_density_entry_point_agrees(self, seed):
        s = random_strategy(np.random.default_rng(seed))
        rhos = [ket_to_density(v) for v in s.states]
        assert score_density(rhos, s.dichotomic, s.final) == pytest.approx(score(s), abs=1e-12)

    @given(seeds, st.permutations(range(4)))
    def test_s4_invariance(self, seed, perm):
        s = random_strategy(np.random.default_rng(seed))
        full = list(perm) + [4, 5, 6]
        assert score(s.permuted(full)) == pytest.approx(score(s), abs=1e-12)

    def test_s4_invariance_all_permutations(self, protocol):
        w = score(protocol)
        for perm in itertools.permutations(range(4)):
            assert abs(score(protocol.permuted(list(perm) + [4, 5, 6])) - w) <= 1e-12

    def test_max_score_breakdown(self):
        assert MAX_SCORE == 14 + 42 + 21


class TestBreakdown:
    def test_golden_entries(self, protocol):
        t = score_breakdown(protocol)
        assert t.proj[0, 0] == pytest.approx(0.9998, abs=5e-4)
        assert t.proj[2, 4] == pytest.approx(0.7333, abs=5e-4)
        assert t.povm[4] == pytest.approx(0.7187, abs=5e-4)

    def test_matches_theory_tables(self, protocol):
        t = score_breakdown(protocol)
        th = golden_tables()["theory"]
        assert np.max(np.abs(t.proj - th.proj)) <= 5e-4
        assert np.max(np.abs(t.povm - th.povm)) <= 5e-4

    def test_orthogonal_states_diagonal_one(self):
        states = [np.eye(4)[min(x, 3)] for x in range(7)]
        dich = tuple(Povm.dichotomic(ket_to_density(v)) for v in states)
        t = score_breakdown(Strategy(tuple(states), dich, Povm.uniform(4, 7)))
        np.testing.assert_allclose(np.diag(t.proj), 1.0)

    @given(seeds)
    def test_score_from_breakdown(self, seed):
        s = random_strategy(np.random.default_rng(seed))
        w, sigma = score_from_probabilities(score_breakdown(s))
        assert sigma is None
        assert w == pytest.approx(score(s), abs=1e-12)

    def test_theory_tables_consistent_with_score(self, protocol):
        w, _ = score_from_probabilities(golden_tables()["theory"])
        assert w == pytest.approx(score(protocol), abs=5e-3)


class TestProbabilities:
    def test_experimental_tables(self):
        w, sigma = score_from_probabilities(golden_tables()["experiment"])
        assert w == pytest.approx(62.6208, abs=5e-3)
        assert sigma == pytest.approx(0.0306, rel=0.1)

    def test_zero_tables(self):
        assert score_from_probabilities(ProbabilityTables(np.zeros((7, 7)), np.zeros(7)))[0] == 0

    def test_sigma_propagation_oracle(self, rng):
        proj_s = rng.uniform(0, 0.01, (7, 7))
        povm_s = rng.uniform(0, 0.01, 7)
        t = ProbabilityTables(np.full((7, 7), 0.5), np.full(7, 0.5), proj_s, povm_s)
        expected = np.sqrt(4 * np.sum(np.diag(proj_s) ** 2) + np.sum(proj_s**2) - np.sum(np.diag(proj_s) ** 2) + 9 * np.sum(povm_s**2))
        assert score_from_probabilities(t)[1] == pytest.approx(expected, rel=1e-12)

    def test_validation(self):
        with pytest.raises(DimensionMismatchError):
            ProbabilityTables(np.zeros((6, 7)), np.zeros(7))
        with pytest.raises(ValidationError):
            ProbabilityTables(np.full((7, 7), 1.5), np.zeros(7))
        with pytest.raises(MissingEntryError):
            score_from_probabilities(ProbabilityTables(np.full((7, 7), np.nan), np.zeros(7)))

    def test_csv_round_trip(self):
        t = golden_tables()["experiment"]
        back = tables_from_csv(tables_to_csv(t))
        np.testing.assert_array_equal(back.proj, t.proj)
        np.testing.assert_array_equal(back.povm_sigma, t.povm_sigma)

    def test_csv_missing_rows(self):
        text = "\n".join(tables_to_csv(golden_tables()["theory"]).splitlines()[:-1])
        with pytest.raises(MissingEntryError):
            tables_from_csv(text)

    def test_csv_bad_header(self):
        with pytest.raises(ValidationError):
            tables_from_csv("a,b\n1,2\n")


class TestStrategyIO:
    def test_json_round_trip(self, protocol, tmp_path):
        path = tmp_path / "s.json"
        save_strategy(protocol, path)
        back = load_strategy(path)
        assert score(back) == score(protocol)
        for a, b in zip(back.states, protocol.states):
            np.testing.assert_array_equal(a, b)
        # dump of the reloaded object is identical
        assert strategy_to_json(strategy_from_json(strategy_to_json(back))) == strategy_to_json(back)

    def test_wrong_counts(self, protocol):
        with pytest.raises(DimensionMismatchError):
            Strategy(protocol.states[:6], protocol.dichotomic, protocol.final)
        with pytest.raises(DimensionMismatchError):
            Strategy(protocol.states, protocol.dichotomic, Povm.uniform(4, 4))

    def test_unnormalized_state_rejected(self, protocol):
        with pytest.raises(ValidationError):
            Strategy((2 * protocol.states[0],) + protocol.states[1:], protocol.dichotomic, protocol.final)
