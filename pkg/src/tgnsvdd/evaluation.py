"""Metrics and experiment reporting.

Attack is the positive class throughout.  Precision/recall/F1 use the
zero-denominator-gives-zero convention; ROC AUC is the rank statistic
P(attack score > normal score) + half the tie probability, computed with
midranks.  Reports are JSON documents with sorted keys (byte-identical for
identical runs) and per-event score CSVs with the schema::

    event_index,time,src,dst,score,threshold,true_label,pred_label
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .ctdg import NORMAL, EventStream, is_attack

ATTACK = "Attack"

SCORE_CSV_HEADER = [
    "event_index", "time", "src", "dst", "score", "threshold", "true_label", "pred_label",
]


def as_binary(labels) -> list[str]:
    """Collapse attack names (anything non-Normal, non-unlabeled) to Attack."""
    return [ATTACK if is_attack(lab) else NORMAL for lab in labels]


def confusion_counts(truth, pred) -> tuple[int, int, int, int]:
    """(tp, fp, fn, tn) over binary Normal/Attack label sequences."""
    if len(truth) != len(pred):
        raise ValueError(f"length mismatch: {len(truth)} truths vs {len(pred)} predictions")
    allowed = {NORMAL, ATTACK}
    tp = fp = fn = tn = 0
    for t, p in zip(truth, pred):
        if t not in allowed or p not in allowed:
            raise ValueError(f"labels must be binary {allowed}, got ({t!r}, {p!r})")
        if t == ATTACK:
            tp += p == ATTACK
            fn += p == NORMAL
        else:
            fp += p == ATTACK
            tn += p == NORMAL
    return tp, fp, fn, tn


def binary_metrics(truth, pred) -> dict:
    """{precision, recall, f1} with Attack positive and 0 on empty denominators."""
    tp, fp, fn, _ = confusion_counts(truth, pred)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def roc_auc(truth, scores) -> float:
    """Midrank Mann-Whitney AUC; requires both classes present."""
    scores = np.asarray(scores, dtype=np.float64)
    if len(truth) != len(scores):
        raise ValueError(f"length mismatch: {len(truth)} truths vs {len(scores)} scores")
    pos = np.array([t == ATTACK for t in truth])
    n_pos = int(pos.sum())
    n_neg = len(truth) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError(
            f"roc_auc needs both classes: got {n_pos} Attack and {n_neg} Normal labels"
        )
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0   # midrank, 1-based
        i = j + 1
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def per_attack_confusion(truth, pred) -> dict:
    """Counts of predicted Normal/Attack per true class (Normal row first,
    attack names sorted)."""
    if len(truth) != len(pred):
        raise ValueError(f"length mismatch: {len(truth)} truths vs {len(pred)} predictions")
    names = sorted({lab for lab in truth if is_attack(lab)})
    table = {name: {NORMAL: 0, ATTACK: 0} for name in [NORMAL] + names}
    for t, p in zip(truth, pred):
        row = t if is_attack(t) else NORMAL
        table[row][p] += 1
    return table


def model_block(truth, scores, tau: float) -> dict:
    """All reported metrics for one model at one threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    pred = [ATTACK if s > tau else NORMAL for s in scores]
    binary = as_binary(truth)
    block = binary_metrics(binary, pred)
    block["roc_auc"] = roc_auc(binary, scores)
    block["threshold"] = float(tau)
    block["confusion"] = per_attack_confusion(truth, pred)
    block["n_events"] = len(scores)
    return block


def write_scores_csv(path, stream: EventStream, scores, tau: float, pred, start_index: int = 0):
    """Per-event score export; ``start_index`` offsets event numbering when
    the stream is a suffix of a longer timeline."""
    scores = np.asarray(scores, dtype=np.float64)
    if not len(stream) == len(scores) == len(pred):
        raise ValueError(
            f"length mismatch: {len(stream)} events, {len(scores)} scores, {len(pred)} labels"
        )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCORE_CSV_HEADER)
        for i in range(len(stream)):
            lab = stream.labels[i]
            writer.writerow(
                [
                    start_index + i,
                    repr(float(stream.times[i])),
                    int(stream.src[i]),
                    int(stream.dst[i]),
                    repr(float(scores[i])),
                    repr(float(tau)),
                    "" if lab is None else lab,
                    pred[i],
                ]
            )


def read_scores_csv(path):
    """Inverse of ``write_scores_csv``; returns a dict of column arrays."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != SCORE_CSV_HEADER:
            raise ValueError(f"{path}: unexpected score CSV header {header}")
        rows = list(reader)
    return {
        "event_index": np.array([int(r[0]) for r in rows], dtype=np.int64),
        "time": np.array([float(r[1]) for r in rows]),
        "src": np.array([int(r[2]) for r in rows], dtype=np.int64),
        "dst": np.array([int(r[3]) for r in rows], dtype=np.int64),
        "score": np.array([float(r[4]) for r in rows]),
        "threshold": np.array([float(r[5]) for r in rows]),
        "true_label": [r[6] if r[6] else None for r in rows],
        "pred_label": [r[7] for r in rows],
    }


def build_report(scenario: str, config_doc: dict, models: dict[str, dict]) -> dict:
    """Assemble the metrics document for one scenario."""
    return {"scenario": scenario, "config": config_doc, "models": models}


def write_report(path, report: dict):
    """Serialize with sorted keys so identical runs are byte-identical."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
