"""Per-subtask F1 and pooled micro-F1 scoring tests."""

from __future__ import annotations

import numpy as np
import pytest

from tweetslots.corpus import (
    AnnotatedTweet,
    EventType,
    SubtaskId,
    SubtaskRegistry,
    explode_instances,
)
from tweetslots.metrics import (
    MetricsError,
    MetricsReport,
    SubtaskCounts,
    compare,
    load_report,
    render_comparison,
    render_table,
    save_report,
    score,
)
from tweetslots.multitask import PredictionRecord

NAME = SubtaskId(EventType.DEATH, "name")
AGE = SubtaskId(EventType.DEATH, "age")
REG = SubtaskRegistry.default()


def tweet(tid, event=EventType.DEATH, n_cands=3, gold=None):
    return AnnotatedTweet(
        id=tid, text="w " * (n_cands * 4), event=event,
        candidates=tuple((i * 8, i * 8 + 5) for i in range(n_cands)),
        gold=gold or {},
    )


def rec(tweet_id, subtask, cand, decision, prob=0.5):
    return PredictionRecord(
        tweet_id=tweet_id, subtask=subtask, candidate_index=cand,
        chunk_text="c", probability=prob, decision=decision,
    )


class TestCounts:
    def test_f1_hand_values(self):
        assert SubtaskCounts(tp=1, fp=1, fn=1).f1 == pytest.approx(0.5)
        assert SubtaskCounts(tp=5, fp=0, fn=0).f1 == 1.0
        assert SubtaskCounts(tp=0, fp=3, fn=2).f1 == 0.0

    def test_zero_denominator(self):
        c = SubtaskCounts()
        assert c.zero_denominator
        assert c.f1 == 0.0
        assert not SubtaskCounts(tp=0, fp=1, fn=0).zero_denominator


class TestScore:
    def test_basic_counting(self):
        tw = tweet("t0", gold={"name": frozenset({0}), "age": frozenset({2})})
        preds = [
            rec("t0", NAME, 0, 1),  # TP
            rec("t0", NAME, 1, 1),  # FP
            rec("t0", NAME, 2, 0),  # TN
            rec("t0", AGE, 2, 0),   # FN
        ]
        rep = score(preds, [tw], REG)
        assert (rep.counts[NAME].tp, rep.counts[NAME].fp, rep.counts[NAME].fn) == (1, 1, 0)
        assert (rep.counts[AGE].tp, rep.counts[AGE].fp, rep.counts[AGE].fn) == (0, 0, 1)

    def test_micro_f1_pools_counts(self):
        # NAME: TP=1 FP=1; AGE: FN=1 -> micro = 2*1/(2*1+1+1) = 0.5.
        tw = tweet("t0", gold={"name": frozenset({0}), "age": frozenset({2})})
        preds = [rec("t0", NAME, 0, 1), rec("t0", NAME, 1, 1), rec("t0", AGE, 2, 0)]
        rep = score(preds, [tw], REG)
        assert rep.micro_f1 == pytest.approx(0.5)

    def test_micro_differs_from_macro(self):
        # Skewed counts: micro pools, macro averages; fixture keeps them
        # apart so the pooled formula is actually exercised.
        tw = tweet("t0", n_cands=3, gold={"name": frozenset({0, 1, 2}), "age": frozenset({0})})
        preds = [
            rec("t0", NAME, 0, 1), rec("t0", NAME, 1, 1), rec("t0", NAME, 2, 1),
            rec("t0", AGE, 0, 0), rec("t0", AGE, 1, 1), rec("t0", AGE, 2, 1),
        ]
        rep = score(preds, [tw], REG)
        per_task_f1 = [rep.counts[NAME].f1, rep.counts[AGE].f1]
        macro = np.mean(per_task_f1)
        assert rep.counts[NAME].f1 == 1.0
        assert rep.counts[AGE].f1 == 0.0
        # micro = 2*3 / (2*3 + 2 + 1) = 6/9
        assert rep.micro_f1 == pytest.approx(6 / 9)
        assert rep.micro_f1 != pytest.approx(macro)

    def test_every_registered_subtask_reported(self):
        rep = score([], [tweet("t0")], REG)
        assert len(rep.counts) == 33
        assert all(c.zero_denominator for c in rep.counts.values())

    def test_prediction_order_irrelevant(self):
        tw = tweet("t0", gold={"name": frozenset({1})})
        preds = [rec("t0", NAME, i, d) for i, d in ((0, 1), (1, 1), (2, 0))]
        a = score(preds, [tw], REG)
        b = score(preds[::-1], [tw], REG)
        assert a.counts == b.counts

    def test_counting_oracle_randomized(self):
        rng = np.random.default_rng(3)
        for trial in range(25):
            tweets, preds = [], []
            oracle = {}
            for ti in range(int(rng.integers(1, 5))):
                event = list(EventType)[rng.integers(0, 5)]
                names = REG.names_for(event)
                n_cands = int(rng.integers(1, 4))
                gold = {}
                for nm in names:
                    if rng.random() < 0.4:
                        gold[nm] = frozenset(
                            int(i) for i in rng.choice(n_cands, size=rng.integers(1, n_cands + 1), replace=False)
                        )
                tw = tweet(f"t{ti}", event=event, n_cands=n_cands, gold=gold)
                tweets.append(tw)
                for nm in names:
                    sid = SubtaskId(event, nm)
                    for ci in range(n_cands):
                        d = int(rng.integers(0, 2))
                        preds.append(rec(tw.id, sid, ci, d))
                        positive = ci in gold.get(nm, frozenset())
                        tp, fp, fn = oracle.get(sid, (0, 0, 0))
                        if d and positive:
                            tp += 1
                        elif d:
                            fp += 1
                        elif positive:
                            fn += 1
                        oracle[sid] = (tp, fp, fn)
            rep = score(preds, tweets, REG)
            for sid, (tp, fp, fn) in oracle.items():
                cell = rep.counts[sid]
                assert (cell.tp, cell.fp, cell.fn) == (tp, fp, fn)

    def test_unknown_tweet_rejected(self):
        with pytest.raises(MetricsError, match="unknown tweet"):
            score([rec("ghost", NAME, 0, 1)], [tweet("t0")], REG)

    def test_event_mismatch_rejected(self):
        cure_tweet = tweet("t0", event=EventType.CURE_AND_PREVENTION)
        with pytest.raises(MetricsError, match="cannot join"):
            score([rec("t0", NAME, 0, 1)], [cure_tweet], REG)

    def test_out_of_range_candidate_rejected(self):
        with pytest.raises(MetricsError, match="out of range"):
            score([rec("t0", NAME, 9, 1)], [tweet("t0")], REG)

    def test_duplicate_triple_rejected(self):
        preds = [rec("t0", NAME, 0, 1), rec("t0", NAME, 0, 0)]
        with pytest.raises(MetricsError, match="duplicate"):
            score(preds, [tweet("t0")], REG)

    def test_unregistered_subtask_rejected(self):
        small = SubtaskRegistry({EventType.DEATH: ("age",)})
        with pytest.raises(MetricsError, match="unregistered"):
            score([rec("t0", NAME, 0, 1)], [tweet("t0")], small)

    def test_duplicate_gold_tweet_rejected(self):
        with pytest.raises(MetricsError, match="duplicate tweet id"):
            score([], [tweet("t0"), tweet("t0")], REG)


class TestRenderTable:
    def make_report(self):
        tw = tweet("t0", gold={"name": frozenset({0})})
        preds = [rec("t0", NAME, 0, 1), rec("t0", NAME, 1, 1)]
        return score(preds, [tw], REG, model_id="m1", corpus_id="c1")

    def test_structure(self):
        lines = render_table(self.make_report()).splitlines()
        # 1 header + 5 event sections + 33 subtask rows + 1 summary.
        assert len(lines) == 40
        assert lines[0].split() == ["subtask", "TP", "FP", "FN", "F1"]
        assert lines[-1].startswith("micro avg. F1")
        uppercase = [ln for ln in lines if ln and ln == ln.upper() and ln[0].isalpha()]
        assert len(uppercase) == 5

    def test_zero_denominator_flag(self):
        lines = render_table(self.make_report()).splitlines()
        starred = [ln for ln in lines if ln.endswith("*")]
        # death/name has counts; the other 32 subtasks never occur.
        assert len(starred) == 32
        death_at = lines.index("DEATH")
        name_row = next(
            ln for ln in lines[death_at + 1:] if ln.strip().startswith("name")
        )
        assert not name_row.endswith("*")
        assert "0.667" in name_row

    def test_micro_value_rendered(self):
        rep = self.make_report()
        assert f"{rep.micro_f1:.3f}" in render_table(rep).splitlines()[-1]


class TestCompareAndIo:
    def make_pair(self):
        tw = tweet("t0", gold={"name": frozenset({0})})
        a = score([rec("t0", NAME, 0, 1), rec("t0", NAME, 1, 1)], [tw], REG,
                  model_id="m", corpus_id="c")
        b = score([rec("t0", NAME, 0, 1), rec("t0", NAME, 1, 0)], [tw], REG,
                  model_id="m", corpus_id="c", filtered=True)
        return a, b

    def test_compare_deltas(self):
        a, b = self.make_pair()
        cmp_ = compare(a, b, "unfiltered", "filtered")
        assert cmp_.micro_delta == pytest.approx(b.micro_f1 - a.micro_f1)
        row = next(r for r in cmp_.rows if r.subtask == NAME)
        assert row.delta == pytest.approx(1.0 - 2 / 3, abs=1e-9)

    def test_compare_requires_same_corpus(self):
        a, _ = self.make_pair()
        other = score([], [tweet("t9")], REG, corpus_id="different")
        with pytest.raises(MetricsError):
            compare(a, other)

    def test_render_comparison_mentions_labels(self):
        a, b = self.make_pair()
        text = render_comparison(compare(a, b, "unfiltered", "filtered"))
        assert "unfiltered" in text and "filtered" in text

    def test_report_round_trip(self, tmp_path):
        a, _ = self.make_pair()
        p = tmp_path / "r.json"
        save_report(a, p)
        again = load_report(p)
        assert again.model_id == a.model_id
        assert again.corpus_id == a.corpus_id
        assert again.filtered == a.filtered
        assert again.counts == a.counts
        assert again.micro_f1 == pytest.approx(a.micro_f1)

    def test_report_file_is_stable(self, tmp_path):
        a, _ = self.make_pair()
        save_report(a, tmp_path / "x.json")
        save_report(a, tmp_path / "y.json")
        assert (tmp_path / "x.json").read_bytes() == (tmp_path / "y.json").read_bytes()
