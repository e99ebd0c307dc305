import math

import numpy as np
import pytest

from wadistill import (
    Alphabet,
    GenerationFailed,
    InvalidInput,
    InvalidSymbol,
    NonStochastic,
    ParseError,
    SingularNormalizerWarning,
    WeightedAutomaton,
    dumps_wa,
    loads_wa,
    random_pfa,
)
from wadistill.wa import total_mass_by_length

from conftest import all_strings


class TestAlphabet:
    def test_ids_in_list_order(self):
        a = Alphabet(["x", "y", "z"])
        assert a.id_of("y") == 1
        assert a.size == 3
        assert a.end_id == 3

    def test_rejects_duplicates_and_empty(self):
        with pytest.raises(InvalidInput):
            Alphabet(["x", "x"])
        with pytest.raises(InvalidInput):
            Alphabet([])

    def test_unknown_symbol(self):
        with pytest.raises(InvalidSymbol):
            Alphabet(["x"]).id_of("q")


class TestWeight:
    def test_worked_example_weights(self, fig_wa):
        assert fig_wa.weight(()) == 0.0
        assert fig_wa.weight((0,)) == pytest.approx(1 / 24, abs=1e-15)
        assert fig_wa.weight((1,)) == pytest.approx(1 / 12, abs=1e-15)
        assert fig_wa.weight((0, 1)) == pytest.approx(5 / 96, abs=1e-15)
        # two independent derivations (matrix product and path enumeration)
        # both give 1/32 for "aa"
        assert fig_wa.weight((0, 0)) == pytest.approx(1 / 32, abs=1e-15)

    def test_out_of_range_symbol(self, fig_wa):
        with pytest.raises(InvalidSymbol):
            fig_wa.weight((0, 2))
        with pytest.raises(InvalidSymbol):
            fig_wa.batch_weights([(0,), (5,)])

    def test_configs(self, fig_wa):
        assert np.array_equal(fig_wa.config(()), [1.0, 0.0])
        assert np.allclose(fig_wa.config((0,)), [0.5, 1 / 6])
        assert np.allclose(fig_wa.config((0, 1)), [1 / 24, 5 / 24])

    def test_sequence_configs_match_single(self, fig_wa):
        seq = (0, 1, 0, 0, 1)
        configs = fig_wa.sequence_configs(seq)
        for i in range(len(seq) + 1):
            assert np.array_equal(configs[i], fig_wa.config(seq[:i]))

    def test_evaluation_linearity(self):
        # weight(uv) equals config(u) continued by v, for random automata
        rng = np.random.default_rng(5)
        for _ in range(5):
            r, k = 3, 2
            wa = WeightedAutomaton(
                Alphabet.of_size(k),
                rng.normal(size=r),
                rng.normal(size=(k, r, r)) * 0.4,
                rng.normal(size=r),
            )
            for w in all_strings(k, 4):
                for cut in range(len(w) + 1):
                    u, v = w[:cut], w[cut:]
                    vec = wa.config(u)
                    for sym in v:
                        vec = vec @ wa.mats[sym]
                    assert float(vec @ wa.alpha_inf) == pytest.approx(
                        wa.weight(w), rel=1e-10, abs=1e-12
                    )


class TestTerminalTilde:
    def test_worked_example(self, fig_wa):
        assert np.allclose(fig_wa.terminal_tilde(), [1.0, 1.0], atol=1e-12)

    def test_rank_one(self):
        wa = WeightedAutomaton(Alphabet(["a"]), [1.0], [[[0.5]]], [0.5])
        assert np.allclose(wa.terminal_tilde(), [1.0])

    def test_singular_falls_back_to_least_squares(self):
        wa = WeightedAutomaton(Alphabet(["a"]), [1.0], [[[1.0]]], [1.0])
        with pytest.warns(SingularNormalizerWarning):
            tilde = wa.terminal_tilde()
        assert wa.singular_normalizer
        # least-squares solution of 0 * x = 1 is the zero vector
        assert np.allclose(tilde, [0.0])

    def test_residual_when_not_singular(self):
        for seed in range(5):
            wa = random_pfa(6, 3, 0.9, 0.7, seed=seed)
            tilde = wa.terminal_tilde()
            a = np.eye(wa.rank) - wa.mats.sum(axis=0)
            resid = np.abs(a @ tilde - wa.alpha_inf).max()
            assert resid <= 1e-9 * (1 + np.abs(wa.alpha_inf).max())
            assert not wa.singular_normalizer


class TestNextScores:
    def test_empty_prefix(self, fig_wa):
        assert np.allclose(fig_wa.next_scores(()), [2 / 3, 1 / 3, 0.0], atol=1e-15)
        assert np.allclose(fig_wa.next_dist(()), [2 / 3, 1 / 3, 0.0], atol=1e-15)

    def test_after_one_symbol(self, fig_wa):
        # raw scores [3/8, 1/4, 1/24]; the normalizer at "a" is 2/3
        raw = fig_wa.next_scores((0,))
        assert np.allclose(raw, [3 / 8, 1 / 4, 1 / 24], atol=1e-15)
        dist = fig_wa.next_dist((0,))
        assert np.allclose(dist, [9 / 16, 6 / 16, 1 / 16], atol=1e-14)
        assert dist.sum() == pytest.approx(1.0, abs=1e-12)

    def test_dead_config_gives_zero_scores(self):
        # second state is unreachable and the first is purely terminal
        wa = WeightedAutomaton(
            Alphabet(["a"]), [1.0, 0.0],
            [[[0.0, 0.0], [0.0, 0.5]]], [1.0, 0.5], stochastic=True,
        )
        assert np.allclose(wa.next_scores((0,)), 0.0)
        assert np.array_equal(wa.next_dist((0,)), [0.0, 0.0])

    def test_chain_rule_ties_conditionals_to_weights(self, fig_wa):
        # product of conditionals including the stop factor equals the weight
        assert fig_wa.next_dist(())[0] * fig_wa.next_dist((0,))[2] == pytest.approx(
            1 / 24, abs=1e-15
        )
        for wa in [fig_wa, random_pfa(4, 2, 1.0, 0.8, seed=3)]:
            end = wa.alphabet.end_id
            for w in all_strings(2, 6):
                prob = 1.0
                for i, sym in enumerate(w):
                    prob *= wa.next_dist(w[:i])[sym]
                prob *= wa.next_dist(w)[end]
                assert prob == pytest.approx(wa.weight(w), abs=1e-9)

    def test_non_stochastic_detected(self):
        wa = WeightedAutomaton(
            Alphabet(["a"]), [1.0], [[[-0.4]]], [0.6], stochastic=True
        )
        with pytest.raises(NonStochastic):
            wa.next_dist(())


class TestSampling:
    def test_point_distribution(self):
        # three chained states emitting exactly "ab"
        mats = np.zeros((2, 3, 3))
        mats[0, 0, 1] = 1.0
        mats[1, 1, 2] = 1.0
        wa = WeightedAutomaton(
            Alphabet(["a", "b"]), [1, 0, 0], mats, [0, 0, 1], stochastic=True
        )
        for seed in range(5):
            assert wa.sample_sequence(seed, 10) == (0, 1)

    def test_first_symbol_frequency(self, fig_wa):
        rng = np.random.default_rng(123)
        draws = [fig_wa.sample_sequence(rng, 50) for _ in range(10_000)]
        freq = sum(1 for d in draws if d and d[0] == 0) / len(draws)
        assert freq == pytest.approx(2 / 3, abs=0.03)

    def test_max_len_zero(self, fig_wa):
        assert fig_wa.sample_sequence(0, 0) == ()

    def test_requires_stochastic_claim(self, fig_wa):
        wa = WeightedAutomaton(
            fig_wa.alphabet, fig_wa.alpha0, fig_wa.mats, fig_wa.alpha_inf
        )
        with pytest.raises(NonStochastic):
            wa.sample_sequence(0, 5)

    def test_deterministic_given_seed(self, fig_wa):
        a = [fig_wa.sample_sequence(np.random.default_rng(9), 30) for _ in range(20)]
        b = [fig_wa.sample_sequence(np.random.default_rng(9), 30) for _ in range(20)]
        assert a == b


class TestRandomPfa:
    def test_single_state_is_geometric(self):
        wa = random_pfa(1, 1, 1.0, 1.0, seed=0)
        p = wa.mats[0, 0, 0]
        assert 0 < p < 1
        assert wa.alpha_inf[0] == pytest.approx(1 - p, abs=1e-12)
        for n in range(6):
            assert wa.weight((0,) * n) == pytest.approx(p ** n * (1 - p), rel=1e-12)

    def test_next_scores_normalized_at_start(self):
        for seed in range(8):
            wa = random_pfa(5, 3, 0.7, 0.6, seed=seed)
            assert abs(wa.next_dist(()).sum() - 1.0) <= 1e-9

    def test_finite_rank_of_weight_table(self):
        wa = random_pfa(5, 3, 1.0, 0.8, seed=11)
        strings = all_strings(3, 4)
        table = np.array(
            [wa.batch_weights([u + v for v in strings]) for u in strings]
        )
        sv = np.linalg.svd(table, compute_uv=False)
        assert (sv[5:] <= 1e-10 * sv[0]).all()

    def test_mass_is_monotone_and_bounded(self):
        for seed in range(5):
            wa = random_pfa(4, 2, 0.9, 0.8, seed=seed)
            masses = total_mass_by_length(wa, 12)
            assert all(b >= a - 1e-12 for a, b in zip(masses, masses[1:]))
            assert masses[-1] <= 1 + 1e-9

    def test_deterministic_given_seed(self):
        a = random_pfa(6, 3, 0.5, 0.5, seed=21)
        b = random_pfa(6, 3, 0.5, 0.5, seed=21)
        assert np.array_equal(a.mats, b.mats)
        assert np.array_equal(a.alpha_inf, b.alpha_inf)

    def test_generation_failure_reported(self):
        # one outgoing edge per state almost never reaches all of 40 states
        with pytest.raises(GenerationFailed):
            random_pfa(40, 1, 1.0, 1e-9, seed=1)

    def test_validates_arguments(self):
        with pytest.raises(InvalidInput):
            random_pfa(0, 2)
        with pytest.raises(InvalidInput):
            random_pfa(2, 2, symbol_sparsity=0.0)


class TestSerialization:
    def test_round_trip_bits(self, fig_wa):
        wa2 = loads_wa(dumps_wa(fig_wa))
        assert np.array_equal(wa2.alpha0, fig_wa.alpha0)
        assert np.array_equal(wa2.alpha_inf, fig_wa.alpha_inf)
        assert np.array_equal(wa2.mats, fig_wa.mats)
        assert wa2.stochastic == fig_wa.stochastic
        assert wa2.alphabet == fig_wa.alphabet
        assert wa2.weight((0, 1)) == pytest.approx(5 / 96, abs=1e-15)

    def test_round_trip_awkward_doubles(self):
        rng = np.random.default_rng(3)
        entries = np.concatenate([
            rng.normal(size=8) * 1e300,
            rng.normal(size=8) * 1e-300,
            [1 / 3, 2 / 3, 6.02214076e23, 5e-324],
        ])
        wa = WeightedAutomaton(
            Alphabet.of_size(4), entries[:2], entries[2:18].reshape(4, 2, 2),
            entries[18:],
        )
        wa2 = loads_wa(dumps_wa(wa))
        assert np.array_equal(wa2.mats, wa.mats)
        assert np.array_equal(wa2.alpha0, wa.alpha0)
        assert np.array_equal(wa2.alpha_inf, wa.alpha_inf)

    def test_bad_json_carries_offset(self):
        with pytest.raises(ParseError) as err:
            loads_wa('{"format_version": 1, "alphabet": [}')
        assert err.value.offset is not None

    def test_empty_alphabet_rejected(self, fig_wa):
        doc = dumps_wa(fig_wa).replace('["a", "b"]', "[]")
        with pytest.raises(ParseError):
            loads_wa(doc)

    def test_rank_mismatch_rejected(self):
        doc = """
        {"format_version": 1, "alphabet": ["a"], "rank": 2,
         "alpha0": [1, 0], "alphaInf": [0, 1],
         "matrices": {"a": [[1, 0, 0], [0, 1, 0]]}, "stochastic": false}
        """
        with pytest.raises(ParseError):
            loads_wa(doc)

    def test_unknown_version_rejected(self, fig_wa):
        doc = dumps_wa(fig_wa).replace('"format_version": 1', '"format_version": 7')
        with pytest.raises(ParseError):
            loads_wa(doc)

    def test_non_finite_rejected(self):
        doc = """
        {"format_version": 1, "alphabet": ["a"], "rank": 1,
         "alpha0": [1], "alphaInf": [NaN], "matrices": {"a": [[1]]},
         "stochastic": false}
        """
        with pytest.raises(ParseError):
            loads_wa(doc)

    def test_matrix_keys_must_match(self, fig_wa):
        doc = dumps_wa(fig_wa).replace('"b":', '"c":')
        with pytest.raises(ParseError):
            loads_wa(doc)

    def test_seventeen_digits_round_trip_any_double(self):
        rng = np.random.default_rng(17)
        for x in rng.normal(size=50) * np.exp(rng.uniform(-200, 200, size=50)):
            assert float(format(float(x), ".17g")) == float(x)
