import numpy as np
import pytest

from spikelasso.errors import DataError, DegenerateDataError, FormatError
from spikelasso.evaluation import (RankedEdgeList, bidirectional_recovery, complete_ranking,
                                   confusion_at_k, evaluate, ppc_curve, ppc_plateau, roc_curve,
                                   summary, write_curves)
from spikelasso.graph import DirectedGraph, count_bidirectional, generate_random


def ranking(pairs, tag="t"):
    return RankedEdgeList([(s, t, float(len(pairs) - k)) for k, (s, t) in enumerate(pairs)], tag)


def all_pairs(n):
    return [(s, t) for s in range(n) for t in range(n) if s != t]


def perfect(truth):
    rest = [e for e in all_pairs(truth.n_nodes) if e not in truth.edges]
    return ranking(truth.sorted_edges() + rest)


def mann_whitney_auc(order, truth):
    """Fraction of (positive, negative) pairs with the positive ranked first."""
    pos_seen, wins, n_pos = 0, 0, len(truth)
    for e in order:
        if e in truth.edges:
            pos_seen += 1
        else:
            wins += pos_seen
    return wins / (n_pos * (truth.universe_size - n_pos))


class TestRankedEdgeList:
    def test_validation(self):
        with pytest.raises(DataError):
            RankedEdgeList([(0, 1, 1.0), (0, 1, 0.5)])
        with pytest.raises(DataError):
            RankedEdgeList([(1, 1, 1.0)])
        with pytest.raises(DataError):
            RankedEdgeList([(0, 1, 0.5), (1, 0, 1.0)])

    def test_csv_round_trip(self, tmp_path):
        r = RankedEdgeList([(0, 1, 2.5), (2, 0, 2.5), (1, 2, -np.inf)], "m")
        r.write_csv(tmp_path / "r.csv")
        assert RankedEdgeList.read_csv(tmp_path / "r.csv", "m").edges == r.edges

    def test_bad_csv(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("src,tgt,score\n0,1,1.0\n1,x,0.5\n")
        with pytest.raises(FormatError) as err:
            RankedEdgeList.read_csv(p)
        assert err.value.line == 3


class TestConfusion:
    truth = DirectedGraph(4, [(0, 1)])

    def test_k_zero(self):
        assert confusion_at_k(ranking([(0, 1)]), self.truth, 0) == (0, 0, 1, 11)

    def test_perfect(self):
        g = generate_random(6, 0.3, 1)
        tp, fp, fn, tn = confusion_at_k(perfect(g), g, len(g))
        assert (tp, fp, fn) == (len(g), 0, 0)

    def test_hand_count(self):
        assert confusion_at_k(ranking([(1, 0), (0, 1)]), self.truth, 1) == (0, 1, 1, 10)

    def test_outside_universe(self):
        with pytest.raises(DataError):
            confusion_at_k(ranking([(0, 7)]), self.truth, 1)

    def test_bad_k(self):
        with pytest.raises(DataError):
            confusion_at_k(ranking([(0, 1)]), self.truth, 2)


class TestPPC:
    def test_all_correct(self):
        g = generate_random(8, 0.3, 0)
        ppc = ppc_curve(perfect(g), g)
        assert all(v == 1.0 for _, v in ppc[:len(g)])

    def test_balanced_zero(self):
        g = DirectedGraph(3, [(0, 1)])
        ppc = ppc_curve(ranking([(0, 1), (1, 0)]), g)
        assert ppc[1][1] == 0.0

    def test_random_asymptote(self):
        rng = np.random.default_rng(0)
        g = generate_random(20, 0.3, 0)
        pairs = all_pairs(20)
        u = len(pairs)
        k = u // 2
        vals = []
        for _ in range(1000):
            order = [pairs[i] for i in rng.permutation(u)]
            vals.append(ppc_curve(ranking(order), g)[k - 1][1])
        assert np.mean(vals) == pytest.approx(2 * len(g) / u - 1, abs=0.02)


class TestROC:
    def test_perfect(self):
        g = generate_random(6, 0.4, 3)
        _, auc = roc_curve(perfect(g), g)
        assert auc == 1.0

    def test_inverted(self):
        g = generate_random(6, 0.4, 3)
        _, auc = roc_curve(ranking(perfect(g).pairs()[::-1]), g)
        assert auc == 0.0

    def test_endpoints(self):
        g = generate_random(6, 0.4, 3)
        roc, _ = roc_curve(ranking([(0, 1)]), g)
        assert roc[0] == (0.0, 0.0) and roc[-1] == (1.0, 1.0)

    def test_matches_mann_whitney(self, rng):
        g = generate_random(10, 0.3, 5)
        pairs = all_pairs(10)
        for _ in range(10):
            order = [pairs[i] for i in rng.permutation(len(pairs))]
            _, auc = roc_curve(ranking(order), g)
            assert auc == pytest.approx(mann_whitney_auc(order, g), abs=1e-12)

    def test_partial_ranking_completed_in_index_order(self):
        g = DirectedGraph(3, [(2, 1)])
        full = complete_ranking(ranking([(0, 1)]), 3)
        assert full.pairs() == [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]
        assert full.edges[-1][2] == -np.inf
        _, auc = roc_curve(ranking([(0, 1)]), g)
        assert auc == pytest.approx(mann_whitney_auc(full.pairs(), g))

    def test_random_calibration(self):
        rng = np.random.default_rng(1)
        g = generate_random(20, 0.3, 1)
        pairs = all_pairs(20)
        aucs = [roc_curve(ranking([pairs[i] for i in rng.permutation(len(pairs))]), g)[1]
                for _ in range(1000)]
        assert np.mean(aucs) == pytest.approx(0.5, abs=0.02)

    def test_degenerate(self):
        with pytest.raises(DegenerateDataError):
            roc_curve(ranking([(0, 1)]), DirectedGraph(3))
        with pytest.raises(DegenerateDataError):
            roc_curve(ranking([(0, 1)]), generate_random(3, 1.0, 0))


class TestBidirectional:
    def test_identity(self):
        g = generate_random(10, 0.4, 2)
        assert bidirectional_recovery(g, g) == (count_bidirectional(g),) * 2

    def test_empty_estimate(self):
        g = generate_random(10, 0.4, 2)
        assert bidirectional_recovery(DirectedGraph(10), g) == (0, count_bidirectional(g))

    def test_half_pair(self):
        truth = DirectedGraph(2, [(0, 1), (1, 0)])
        assert bidirectional_recovery(DirectedGraph(2, [(0, 1)]), truth) == (0, 1)

    def test_size_mismatch(self):
        with pytest.raises(DataError):
            bidirectional_recovery(DirectedGraph(2), DirectedGraph(3))


class TestEvaluate:
    def test_rows_and_file(self, tmp_path):
        g = generate_random(5, 0.3, 4)
        curves = evaluate(perfect(g), g)
        assert len(curves.rows) == g.universe_size + 1
        assert ppc_plateau(curves) == len(g)
        write_curves(curves, tmp_path / "c.csv")
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "k,fraction,tp,fp,tpr,fpr,ppc"
        assert lines[1].startswith("0,0.0,0,0,0.0,0.0,")
        assert lines[-1].split(",")[4:6] == ["1.0", "1.0"]

    def test_summary(self):
        g = generate_random(8, 0.4, 6)
        r = perfect(g)
        doc = summary(evaluate(r, g), r, g)
        assert doc["auc"] == 1.0 and doc["ppc_plateau"] == len(g)
        assert doc["bidirectional_recovered"] == doc["bidirectional_total"]
