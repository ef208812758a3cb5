"""Metrics, ranking statistics, score CSVs, and report documents."""

import json

import numpy as np
import pytest

from tgnsvdd.ctdg import NORMAL, EventStream
from tgnsvdd.evaluation import (
    ATTACK,
    as_binary,
    binary_metrics,
    build_report,
    confusion_counts,
    model_block,
    per_attack_confusion,
    read_scores_csv,
    roc_auc,
    write_report,
    write_scores_csv,
)

from conftest import random_stream

A, N = ATTACK, NORMAL


# ---------------------------------------------------------------------------
# confusion and point metrics
# ---------------------------------------------------------------------------


def test_confusion_counts_by_hand():
    truth = [A, A, A, N, N, N, N]
    pred = [A, A, N, A, N, N, N]
    assert confusion_counts(truth, pred) == (2, 1, 1, 3)


def test_binary_metrics_by_hand():
    truth = [A, A, A, N, N, N, N]
    pred = [A, A, N, A, N, N, N]
    m = binary_metrics(truth, pred)
    assert m["precision"] == 2 / 3
    assert m["recall"] == 2 / 3
    assert m["f1"] == 2 / 3  # harmonic mean of equal values


def test_binary_metrics_zero_denominators_give_zero():
    all_normal_pred = binary_metrics([A, N], [N, N])
    assert all_normal_pred == {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    no_attacks = binary_metrics([N, N], [N, N])
    assert no_attacks == {"precision": 0.0, "recall": 0.0, "f1": 0.0}


def test_confusion_guards():
    with pytest.raises(ValueError, match="length mismatch"):
        confusion_counts([A], [A, N])
    with pytest.raises(ValueError, match="binary"):
        confusion_counts(["Flood"], [A])


def test_as_binary_collapses_attack_names():
    assert as_binary(["Flood", N, None, "Scan"]) == [A, N, N, A]


# ---------------------------------------------------------------------------
# ROC AUC
# ---------------------------------------------------------------------------


def test_auc_perfect_and_inverted_and_chance():
    truth = [N, N, A, A]
    assert roc_auc(truth, [0.1, 0.2, 0.8, 0.9]) == 1.0
    assert roc_auc(truth, [0.9, 0.8, 0.2, 0.1]) == 0.0
    assert roc_auc(truth, [0.5, 0.5, 0.5, 0.5]) == 0.5


def test_auc_single_tie_worth_half():
    # one attack tied with one of two normals: (1 + 0.5) / 2 pairs
    assert roc_auc([N, N, A], [0.1, 0.5, 0.5]) == 0.75


def pair_counting_auc(truth, scores):
    """O(n^2) definition: wins + half-ties over all attack/normal pairs."""
    pos = [s for t, s in zip(truth, scores) if t == A]
    neg = [s for t, s in zip(truth, scores) if t == N]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def test_auc_matches_pair_counting_oracle_with_ties(rng):
    for _ in range(25):
        n = 80
        truth = [A if rng.uniform() < 0.3 else N for _ in range(n)]
        if A not in truth or N not in truth:
            continue
        # coarse grid forces plenty of exact ties
        scores = rng.integers(0, 12, n) / 4.0
        got = roc_auc(truth, scores)
        want = pair_counting_auc(truth, scores)
        assert abs(got - want) < 1e-12


def test_auc_requires_both_classes():
    with pytest.raises(ValueError, match="both classes"):
        roc_auc([N, N], [0.1, 0.2])
    with pytest.raises(ValueError, match="both classes"):
        roc_auc([A, A], [0.1, 0.2])
    with pytest.raises(ValueError, match="length mismatch"):
        roc_auc([A, N], [0.1])


def test_auc_invariant_under_monotone_transforms(rng):
    truth = [A if rng.uniform() < 0.4 else N for _ in range(60)]
    truth[0], truth[1] = A, N
    scores = rng.normal(0, 1, 60)
    base = roc_auc(truth, scores)
    assert roc_auc(truth, 3.0 * scores + 7.0) == base
    assert roc_auc(truth, np.exp(scores)) == base


# ---------------------------------------------------------------------------
# per-attack table and model block
# ---------------------------------------------------------------------------


def test_per_attack_confusion_rows():
    truth = [N, "Flood", "Scan", "Flood", N, None]
    pred = [N, A, N, A, A, N]
    table = per_attack_confusion(truth, pred)
    assert list(table.keys()) == [N, "Flood", "Scan"]  # Normal first, names sorted
    assert table[N] == {N: 2, A: 1}          # the unlabeled event counts as Normal
    assert table["Flood"] == {N: 0, A: 2}
    assert table["Scan"] == {N: 1, A: 0}
    for row in table.values():
        assert row[N] + row[A] in (1, 2, 3)
    assert sum(row[N] + row[A] for row in table.values()) == len(truth)


def test_model_block_contents():
    truth = [N, N, "Flood", "Flood"]
    scores = [0.1, 0.3, 0.6, 0.9]
    block = model_block(truth, scores, tau=0.5)
    assert block["precision"] == 1.0 and block["recall"] == 1.0 and block["f1"] == 1.0
    assert block["roc_auc"] == 1.0
    assert block["threshold"] == 0.5
    assert block["n_events"] == 4
    assert block["confusion"]["Flood"] == {N: 0, A: 2}
    # the cut is strict: a score equal to tau stays Normal
    boundary = model_block(truth, [0.1, 0.3, 0.5, 0.9], tau=0.5)
    assert boundary["recall"] == 0.5


# ---------------------------------------------------------------------------
# score CSVs
# ---------------------------------------------------------------------------


def test_scores_csv_round_trip(tmp_path, rng):
    stream = random_stream(rng, n_events=20, n_nodes=5, d_e=2)
    labels = [N if i % 4 else "Probe" for i in range(20)]
    labels[6] = None
    stream = EventStream.from_arrays(stream.src, stream.dst, stream.times,
                                     stream.features, labels)
    scores = rng.uniform(0, 2, 20)
    pred = [A if s > 0.7 else N for s in scores]
    path = tmp_path / "scores.csv"
    write_scores_csv(path, stream, scores, tau=0.7, pred=pred, start_index=100)
    cols = read_scores_csv(path)
    np.testing.assert_array_equal(cols["event_index"], np.arange(100, 120))
    np.testing.assert_array_equal(cols["time"], stream.times)      # repr round-trips
    np.testing.assert_array_equal(cols["score"], scores)
    np.testing.assert_array_equal(cols["threshold"], np.full(20, 0.7))
    np.testing.assert_array_equal(cols["src"], stream.src)
    np.testing.assert_array_equal(cols["dst"], stream.dst)
    assert cols["true_label"] == labels
    assert cols["pred_label"] == pred


def test_scores_csv_guards(tmp_path, rng):
    stream = random_stream(rng, n_events=5, n_nodes=3, d_e=2)
    with pytest.raises(ValueError, match="length mismatch"):
        write_scores_csv(tmp_path / "x.csv", stream, [0.1], 0.5, [N])
    good = tmp_path / "good.csv"
    write_scores_csv(good, stream, np.zeros(5), 0.5, [N] * 5)
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        read_scores_csv(bad)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def test_report_document_is_byte_deterministic(tmp_path):
    truth = [N, N, "Flood", "Flood"]
    models = {
        "tgn_svdd": model_block(truth, [0.1, 0.2, 0.8, 0.9], 0.5),
        "iforest": model_block(truth, [0.4, 0.3, 0.6, 0.2], 0.5),
    }
    report = build_report("with-features", {"seed": 7}, models)
    p1, p2 = tmp_path / "r1.json", tmp_path / "r2.json"
    write_report(p1, report)
    write_report(p2, build_report("with-features", {"seed": 7}, models))
    b1, b2 = p1.read_bytes(), p2.read_bytes()
    assert b1 == b2
    assert b1.endswith(b"\n")
    doc = json.loads(b1)
    assert doc["scenario"] == "with-features"
    assert doc["config"] == {"seed": 7}
    assert set(doc["models"]) == {"tgn_svdd", "iforest"}
    assert doc["models"]["tgn_svdd"]["roc_auc"] == 1.0
    # sorted keys at every level
    assert list(doc.keys()) == sorted(doc.keys())
