import math
from datetime import date

import numpy as np
import pytest
from hypothesis import assume, example, given, settings
from hypothesis import strategies as st
from oracles import js_mp, t_two_sided_p

from agora_polar.ingest import SpeechDoc
from agora_polar.lda import DocInference, LdaConfig
from agora_polar.polarization import (
    LN2,
    AggregationError,
    MultirunError,
    Period,
    Selector,
    aggregate,
    js_divergence,
    multirun,
    polarization,
    timeline,
    topic_difference_series,
    welch_t_test,
    year_period,
)
from agora_polar.preprocess import BowCorpus, BowDoc


def _inf(doc_id, theta, n):
    """Inference whose token posteriors all equal ``theta``."""
    theta = np.asarray(theta, dtype=float)
    return DocInference(doc_id, theta + 1.0, np.array([0]), np.array([float(n)]), theta[None, :])


def _doc(doc_id, party, year=2000, month=1):
    return SpeechDoc(doc_id, "S", date(year, month, 1), party=party, tokens=())


def _prob(k):
    return st.lists(st.floats(0, 1), min_size=k, max_size=k).filter(lambda v: sum(v) > 1e-3).map(
        lambda v: np.asarray(v) / sum(v)
    )


class TestAggregate:
    def test_weighted_example(self):
        infs = [_inf("a", [0.5, 0.5], 2), _inf("b", [1.0, 0.0], 6)]
        docs = [_doc("a", "X"), _doc("b", "X")]
        dist = aggregate(infs, docs, "X")
        np.testing.assert_allclose(dist.theta, [0.875, 0.125], rtol=1e-15)
        assert (dist.total_tokens, dist.n_docs) == (8, 2)

    def test_single_doc(self):
        dist = aggregate([_inf("a", [0.2, 0.3, 0.5], 4)], [_doc("a", "X")], "X")
        np.testing.assert_allclose(dist.theta, [0.2, 0.3, 0.5], rtol=1e-15)

    def test_no_match_names_selector(self):
        with pytest.raises(AggregationError, match="'Y'"):
            aggregate([_inf("a", [1.0, 0.0], 1)], [_doc("a", "X")], "Y")

    def test_period_filter(self):
        infs = [_inf("a", [1.0, 0.0], 1), _inf("b", [0.0, 1.0], 1)]
        docs = [_doc("a", "X", 2000), _doc("b", "X", 2001)]
        np.testing.assert_array_equal(aggregate(infs, docs, "X", year_period(2001)).theta, [0.0, 1.0])

    def test_unknown_excluded_by_default(self):
        infs = [_inf("a", [1.0, 0.0], 1), _inf("b", [0.0, 1.0], 1)]
        docs = [_doc("a", "X"), _doc("b", "UNKNOWN")]
        everyone = Selector("all", lambda d: True)
        assert aggregate(infs, docs, everyone).n_docs == 1
        assert aggregate(infs, docs, everyone, include_unknown=True).n_docs == 2

    def test_gamma_source(self):
        inf = _inf("a", [0.25, 0.75], 3)
        dist = aggregate([inf], [_doc("a", "X")], "X", source="gamma")
        np.testing.assert_allclose(dist.theta, inf.gamma / inf.gamma.sum())


@settings(max_examples=50)
@given(st.lists(st.tuples(_prob(3), st.integers(1, 50)), min_size=1, max_size=8), st.randoms())
def test_aggregate_order_and_split_invariance(items, rnd):
    infs = [_inf(f"d{i}", th, n) for i, (th, n) in enumerate(items)]
    docs = [_doc(f"d{i}", "X") for i in range(len(items))]
    base = aggregate(infs, docs, "X").theta
    order = list(range(len(items)))
    rnd.shuffle(order)
    shuffled = aggregate([infs[i] for i in order], [docs[i] for i in order], "X").theta
    np.testing.assert_allclose(shuffled, base, rtol=1e-12, atol=1e-15)
    th, n = items[0]
    if n >= 2:
        split = [_inf("s1", th, 1), _inf("s2", th, n - 1)] + infs[1:]
        split_docs = [_doc("s1", "X"), _doc("s2", "X")] + docs[1:]
        np.testing.assert_allclose(aggregate(split, split_docs, "X").theta, base, rtol=1e-12, atol=1e-15)


class TestJs:
    def test_identity(self):
        assert js_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0

    def test_disjoint(self):
        assert js_divergence([1.0, 0.0], [0.0, 1.0]) == pytest.approx(math.log(2), abs=1e-15)

    def test_worked_value_against_high_precision(self):
        oracle = js_mp([0.5, 0.5], [0.25, 0.75])
        assert float(oracle) == pytest.approx(0.033822075568605230, abs=1e-17)
        assert js_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(float(oracle), abs=1e-15)

    def test_base_two(self):
        assert js_divergence([1.0, 0.0], [0.0, 1.0], base=2) == pytest.approx(1.0, abs=1e-15)
        assert LN2 == math.log(2)

    @pytest.mark.parametrize(
        "p, q, err",
        [([0.5, 0.5], [1.0], "dimension"), ([1.2, -0.2], [0.5, 0.5], "non-negative"), ([0.5, 0.4], [0.5, 0.5], "sums")],
    )
    def test_errors(self, p, q, err):
        with pytest.raises(ValueError, match=err):
            js_divergence(p, q)

    @given(_prob(5), _prob(5))
    def test_symmetric_bounded(self, p, q):
        a, b = js_divergence(p, q), js_divergence(q, p)
        assert a == b
        assert 0.0 <= a <= math.log(2) + 1e-12

    @settings(max_examples=50)
    @given(_prob(4), _prob(4))
    def test_matches_oracle(self, p, q):
        assert js_divergence(p, q) == pytest.approx(float(js_mp(p, q, 30)), abs=1e-13)

    @given(_prob(4), _prob(4))
    def test_zero_iff_equal(self, p, q):
        js = js_divergence(p, q)
        if np.array_equal(p, q):
            assert js == 0.0
        if np.abs(p - q).max() > 1e-6:
            assert js > 1e-12


def _two_party_years():
    infs, docs = [], []
    plan = {2001: ([0.7, 0.3], [0.4, 0.6]), 2002: ([0.6, 0.4], [0.6, 0.4]), 2004: ([0.9, 0.1], [0.1, 0.9])}
    for year, (ta, tb) in plan.items():
        for j in range(2):
            infs += [_inf(f"a{year}{j}", ta, 3 + j), _inf(f"b{year}{j}", tb, 5 + 2 * j)]
            docs += [_doc(f"a{year}{j}", "A", year, 1 + 5 * j), _doc(f"b{year}{j}", "B", year, 2 + 5 * j)]
    infs.append(_inf("a2003", [0.5, 0.5], 4))
    docs.append(_doc("a2003", "A", 2003))
    return infs, docs


class TestTimeline:
    def test_gap_year_is_null(self):
        infs, docs = _two_party_years()
        tl = timeline(infs, docs, "A", "B")
        assert [p.period.label for p in tl] == ["2001", "2002", "2003", "2004"]
        assert tl[2].js is None and tl[2].group1 is not None and tl[2].group2 is None
        assert tl[1].js == pytest.approx(0.0, abs=1e-12)
        assert tl[3].js > tl[0].js > 0

    def test_single_year_matches_whole(self):
        infs = [_inf("a", [0.8, 0.2], 3), _inf("b", [0.3, 0.7], 2)]
        docs = [_doc("a", "A", 2005), _doc("b", "B", 2005, 6)]
        (pt,) = timeline(infs, docs, "A", "B")
        assert pt.js == polarization(infs, docs, "A", "B").js

    def test_same_group_all_zero(self):
        infs, docs = _two_party_years()
        assert all(p.js == 0.0 for p in timeline(infs, docs, "A", "A"))

    def test_whole_is_mixture_of_years(self):
        infs, docs = _two_party_years()
        whole = aggregate(infs, docs, "A")
        years = [p.group1 for p in timeline(infs, docs, "A", "B") if p.group1 is not None]
        mix = sum(d.total_tokens * d.theta for d in years) / sum(d.total_tokens for d in years)
        np.testing.assert_allclose(whole.theta, mix, atol=1e-9)

    def test_quarters(self):
        infs, docs = _two_party_years()
        tl = timeline(infs, docs, "A", "B", "quarter")
        assert tl[0].period == Period(date(2001, 1, 1), date(2001, 3, 31), "2001-Q1")
        assert len(tl) == 15
        assert tl[-1].period.label == "2004-Q3"


class TestTopicDifference:
    def test_sign_and_sum(self):
        infs, docs = _two_party_years()
        s0 = topic_difference_series(infs, docs, "A", "B", 0)
        s1 = topic_difference_series(infs, docs, "A", "B", 1)
        assert s0[0][1] > 0  # A attends topic 0 more in 2001
        assert s0[2][1] is None
        for (_, a), (_, b) in zip(s0, s1):
            if a is not None:
                assert a + b == pytest.approx(0.0, abs=1e-12)

    def test_same_group_zero(self):
        infs, docs = _two_party_years()
        assert all(v in (0.0, None) for _, v in topic_difference_series(infs, docs, "A", "A", 1))

    def test_out_of_range(self):
        infs, docs = _two_party_years()
        with pytest.raises(ValueError, match="out of range"):
            topic_difference_series(infs, docs, "A", "B", 2)


class TestMultirun:
    def _corpus(self):
        rng = np.random.default_rng(0)
        bows, docs = [], []
        for d in range(40):
            words = rng.integers(8, size=20) if d % 2 else rng.integers(4, size=20) + 4
            ids, cts = np.unique(words, return_counts=True)
            bows.append(BowDoc(f"d{d}", tuple(zip(ids.tolist(), cts.tolist())), 20))
            docs.append(_doc(f"d{d}", "A" if d % 2 else "B", 2000 + d % 3))
        return BowCorpus(bows, 8), docs

    def test_same_seed_twice_zero_std(self):
        corpus, docs = self._corpus()
        (ens,) = multirun(corpus, LdaConfig(K=2, batch_size=10), [5, 5], [("A", "B")], docs)
        assert ens.js_values[0] == ens.js_values[1]
        assert ens.sample_std == 0.0
        assert ens.seeds == (5, 5)

    def test_parallel_matches_serial(self):
        corpus, docs = self._corpus()
        cfg = LdaConfig(K=2, batch_size=10)
        serial = multirun(corpus, cfg, [1, 2, 3], [("A", "B")], docs)
        parallel = multirun(corpus, cfg, [1, 2, 3], [("A", "B")], docs, max_parallel=3)
        assert serial == parallel
        ens = serial[0]
        assert ens.mean == pytest.approx(np.mean(ens.js_values), rel=1e-15)
        assert ens.sample_std == pytest.approx(np.std(ens.js_values, ddof=1), rel=1e-15)

    def test_needs_two_seeds(self):
        corpus, docs = self._corpus()
        with pytest.raises(ValueError, match="two seeds"):
            multirun(corpus, LdaConfig(K=2), [1], [("A", "B")], docs)

    def test_error_names_seed(self):
        empty = BowCorpus([BowDoc("e", (), 0)], 3)
        with pytest.raises(MultirunError, match="seed 7") as info:
            multirun(empty, LdaConfig(K=2), [7, 8], [("A", "B")], [])
        assert info.value.seed == 7


class TestWelch:
    def test_hand_example(self):
        res = welch_t_test([1, 2, 3], [2, 3, 4])
        assert res.t == pytest.approx(-1.224745, abs=1e-4)
        assert res.df == pytest.approx(4.0, abs=1e-4)
        assert res.p == pytest.approx(t_two_sided_p(res.t, res.df), abs=1e-3)
        assert res.p == pytest.approx(0.2878, abs=1e-3)

    def test_identical(self):
        res = welch_t_test([0.1, 0.4, 0.2], [0.1, 0.4, 0.2])
        assert res.t == 0.0 and res.p == pytest.approx(1.0)

    def test_zero_variance(self):
        assert welch_t_test([1, 1], [1, 1]) == (0.0, 2.0, 1.0)
        t, _, p = welch_t_test([2, 2], [1, 1])
        assert t == math.inf and p == 0.0

    def test_tiny_variance_df(self):
        res = welch_t_test([0.0, 0.0], [0.0, 2.47080686289016e-94])
        assert res.df == 1.0 and res.t == -1.0
        assert res.p == pytest.approx(0.5, abs=1e-12)

    def test_too_small(self):
        with pytest.raises(ValueError):
            welch_t_test([1.0], [1.0, 2.0])

    @given(
        st.lists(st.floats(-100, 100), min_size=2, max_size=12),
        st.lists(st.floats(-100, 100), min_size=2, max_size=12),
    )
    @example([0.0, 0.0], [0.0, 2.47080686289016e-94])
    def test_antisymmetric(self, a, b):
        ab, ba = welch_t_test(a, b), welch_t_test(b, a)
        assert ab.t == -ba.t
        assert ab.df == ba.df
        assert ab.p == ba.p

    @settings(max_examples=25)
    @given(
        st.lists(st.floats(0, 1), min_size=3, max_size=10),
        st.lists(st.floats(0, 1), min_size=3, max_size=10),
    )
    def test_p_matches_integration(self, a, b):
        assume(np.var(a) > 1e-6 and np.var(b) > 1e-6)
        res = welch_t_test(a, b)
        assert res.p == pytest.approx(t_two_sided_p(res.t, res.df), abs=1e-6)
