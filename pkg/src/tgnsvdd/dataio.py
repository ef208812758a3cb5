"""Ingestion, preprocessing, experiment construction, and synthetic traffic.

CSV contract (UTF-8, comma-separated, header required)::

    src,dst,timestamp,label,f0,...,f{d_e-1}

``src``/``dst`` are free-form node keys, ``timestamp`` integer milliseconds,
``label`` free-form (mapped through a label table; "BENIGN" -> Normal, empty
-> unlabeled by default), features numeric.  Loading enumerates node keys
densely in first-appearance order after a stable time sort, so saving a
loaded stream and reloading it reproduces identical ids.  Timestamps are
double-precision seconds internally.

The synthetic generator builds community-structured benign traffic with
Poisson arrivals and prototype-based features, then adds bursty attack
traffic from fresh node ids inside a narrow window near the end of the
benign span (benign traffic keeps flowing through the window, so the scored
region contains both classes).  "Hard mode" additionally lets the first
attacker emit benign-looking Normal events during the window, modelling an
attacker hiding behind an identity that also behaves normally.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .ctdg import NORMAL, EventStream

UNLABELED = None

DEFAULT_LABEL_MAP: dict[str, str | None] = {"BENIGN": NORMAL, "": UNLABELED}


class DataError(ValueError):
    """Malformed input data; message carries file and line context."""


# ---------------------------------------------------------------------------
# CSV ingestion / export
# ---------------------------------------------------------------------------


def load_temporal_csv(path, label_map: dict[str, str | None] | None = None):
    """Read a temporal CSV into an EventStream.

    Returns ``(stream, node_map, label_map)`` where ``node_map`` maps raw
    node keys to the dense ids used in the stream and ``label_map`` is the
    mapping that was applied (unmapped labels pass through as attack names).
    """
    label_map = dict(DEFAULT_LABEL_MAP if label_map is None else label_map)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        base = ["src", "dst", "timestamp", "label"]
        if header[: len(base)] != base:
            raise DataError(f"{path}:1: header must start with {','.join(base)}")
        feat_cols = header[len(base):]
        expected = [f"f{i}" for i in range(len(feat_cols))]
        if feat_cols != expected:
            raise DataError(f"{path}:1: feature columns must be f0..f{len(feat_cols) - 1}")
        d_e = len(feat_cols)

        src_keys, dst_keys, times, labels = [], [], [], []
        feats = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            try:
                ts = int(row[2])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer timestamp {row[2]!r}") from None
            if ts < 0:
                raise DataError(f"{path}:{lineno}: negative timestamp {ts}")
            try:
                fvals = [float(v) for v in row[4:]]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric feature value") from None
            src_keys.append(row[0])
            dst_keys.append(row[1])
            times.append(ts / 1000.0)
            labels.append(label_map.get(row[3], row[3]))
            feats.append(fvals)

    order = np.argsort(np.asarray(times), kind="stable")
    node_map: dict[str, int] = {}
    src = np.empty(len(order), dtype=np.int64)
    dst = np.empty(len(order), dtype=np.int64)
    for out_i, i in enumerate(order):
        for key, arr in ((src_keys[i], src), (dst_keys[i], dst)):
            if key not in node_map:
                node_map[key] = len(node_map)
            arr[out_i] = node_map[key]
    stream = EventStream.from_arrays(
        src,
        dst,
        np.asarray(times)[order],
        np.asarray(feats, dtype=np.float64).reshape(len(order), d_e)[order],
        [labels[i] for i in order],
    )
    return stream, node_map, label_map


def save_temporal_csv(path, stream: EventStream, node_keys: list[str] | None = None):
    """Write the canonical CSV (dense ids as keys unless ``node_keys`` maps
    them back; timestamps as integer milliseconds; labels verbatim, unlabeled
    as empty)."""
    d_e = stream.features.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src", "dst", "timestamp", "label"] + [f"f{i}" for i in range(d_e)])
        for i in range(len(stream)):
            s, d = int(stream.src[i]), int(stream.dst[i])
            label = stream.labels[i]
            writer.writerow(
                [
                    node_keys[s] if node_keys else str(s),
                    node_keys[d] if node_keys else str(d),
                    int(round(stream.times[i] * 1000.0)),
                    "" if label is None else label,
                ]
                + [repr(float(v)) for v in stream.features[i]]
            )


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------


def scale_features(stream: EventStream, n_train: int):
    """Min-max scale features to [0,1] using statistics of the first
    ``n_train`` events only; later events are clamped into [0,1] and
    constant train columns map to 0 everywhere.

    Returns ``(scaled_stream, (lo, hi))``.
    """
    if not 0 < n_train <= len(stream):
        raise ValueError(f"n_train must be in [1, {len(stream)}], got {n_train}")
    train_feats = stream.features[:n_train]
    lo = train_feats.min(axis=0)
    hi = train_feats.max(axis=0)
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    scaled = np.clip((stream.features - lo) / safe, 0.0, 1.0)
    scaled[:, span == 0] = 0.0
    out = EventStream.from_arrays(
        stream.src, stream.dst, stream.times, scaled, list(stream.labels)
    )
    return out, (lo, hi)


def zero_features(stream: EventStream) -> EventStream:
    """The feature-ablation view: identical stream, all features zero."""
    return EventStream.from_arrays(
        stream.src, stream.dst, stream.times, np.zeros_like(stream.features),
        list(stream.labels),
    )


def stitch_days(
    benign: EventStream,
    attack_day: EventStream,
    benign_keys: dict[str, int] | None = None,
    attack_keys: dict[str, int] | None = None,
):
    """Concatenate two recording periods into one gapless timeline.

    The benign part is shifted to start at 0 and the attack part is shifted
    to begin exactly where the benign part ends.  When both node-key maps
    are given, shared keys collapse to one id and new attack-side keys get
    fresh ids; otherwise the two streams are assumed to share an id space.

    Returns ``(stream, merged_keys)`` with ``merged_keys`` None when no maps
    were supplied.
    """
    if len(benign) == 0 or len(attack_day) == 0:
        raise ValueError("stitch_days: both streams must be nonempty")
    b_times = benign.times - benign.times[0]
    benign_end = b_times[-1]
    a_times = attack_day.times - attack_day.times[0] + benign_end

    merged_keys = None
    a_src, a_dst = attack_day.src, attack_day.dst
    if benign_keys is not None and attack_keys is not None:
        merged_keys = dict(benign_keys)
        remap = {}
        for key, old_id in attack_keys.items():
            if key not in merged_keys:
                merged_keys[key] = len(merged_keys)
            remap[old_id] = merged_keys[key]
        a_src = np.array([remap[int(v)] for v in a_src], dtype=np.int64)
        a_dst = np.array([remap[int(v)] for v in a_dst], dtype=np.int64)

    stream = EventStream.from_arrays(
        np.concatenate([benign.src, a_src]),
        np.concatenate([benign.dst, a_dst]),
        np.concatenate([b_times, a_times]),
        np.vstack([benign.features, attack_day.features]),
        list(benign.labels) + list(attack_day.labels),
    )
    return stream, merged_keys


@dataclass(frozen=True)
class SplitSpec:
    n_train: int
    n_val: int

    def __post_init__(self):
        if self.n_train < 1 or self.n_val < 0:
            raise ValueError(f"invalid split spec ({self.n_train}, {self.n_val})")


def chrono_split(stream: EventStream, spec: SplitSpec):
    """Contiguous (train, val, test) prefix split.

    Every train/val event must carry the Normal label; the first violation
    is reported by index.
    """
    cut = spec.n_train + spec.n_val
    if cut > len(stream):
        raise ValueError(f"split ({spec.n_train}+{spec.n_val}) exceeds stream size {len(stream)}")
    for i in range(cut):
        if stream.labels[i] != NORMAL:
            raise ValueError(
                f"chrono_split: event {i} has label {stream.labels[i]!r}; "
                f"train/val ranges must contain only {NORMAL} events"
            )
    return (
        stream.slice(0, spec.n_train),
        stream.slice(spec.n_train, cut),
        stream.slice(cut, len(stream)),
    )


def inject_identity_swap(
    train: EventStream, donor_node: int, suspect_node: int, n: int = 500, seed: int = 0
) -> EventStream:
    """Duplicate ``n`` random donor-sourced train events under the suspect id.

    The copies keep destination, timestamp, and features, get the Normal
    label, and are inserted at their original timestamps (a copy sorts after
    its donor).  Returns a new stream of size ``len(train) + n``.
    """
    if n == 0:
        return train.slice(0, len(train))
    donor_pos = np.flatnonzero(train.src == donor_node)
    if len(donor_pos) < n:
        raise ValueError(
            f"donor node {donor_node} has only {len(donor_pos)} source events; need {n}"
        )
    rng = np.random.default_rng(seed)
    picked = np.sort(rng.choice(donor_pos, size=n, replace=False))
    src = np.concatenate([train.src, np.full(n, suspect_node, dtype=np.int64)])
    dst = np.concatenate([train.dst, train.dst[picked]])
    times = np.concatenate([train.times, train.times[picked]])
    feats = np.vstack([train.features, train.features[picked]])
    labels = list(train.labels) + [NORMAL] * n
    order = np.argsort(times, kind="stable")
    return EventStream.from_arrays(
        src[order], dst[order], times[order], feats[order], [labels[i] for i in order]
    )


# ---------------------------------------------------------------------------
# synthetic benchmark generator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    n_nodes: int = 50
    n_benign_events: int = 2000
    n_attack_events: int = 200
    attacker_count: int = 2
    seed: int = 7
    d_e: int = 8
    hard_mode: bool = False
    communities: int = 5
    benign_rate: float = 1.0          # benign events per second
    attack_rate: float = 20.0         # within-burst attack events per second
    attack_window_fraction: float = 0.2   # attacks live in this tail share of the span
    attack_subwindow: float = 0.3     # bursts confined to this share of the window
    n_suspect_normal: int = 120       # hard mode: Normal events by the suspect id
    feature_noise: float = 0.05
    attack_feature_shift: float = 0.04
    episodes_per_attacker: int = 3
    late_joiners: int = 5             # benign nodes that first appear near the window
    late_joiner_share: float = 0.35   # benign traffic share taken by active joiners

    def __post_init__(self):
        if min(self.n_nodes, self.communities) < 1 or self.n_benign_events < 0:
            raise ValueError("n_nodes, communities must be >= 1; event counts >= 0")
        if self.n_attack_events < 0 or self.attacker_count < 1 or self.d_e < 1:
            raise ValueError("invalid attack/feature configuration")
        if self.n_nodes < 2 * self.communities:
            raise ValueError("need at least two nodes per community")
        if not 0 <= self.late_joiners <= self.communities:
            raise ValueError("late_joiners must be between 0 and communities")
        if not 0.0 <= self.late_joiner_share < 1.0:
            raise ValueError("late_joiner_share must lie in [0,1)")


@dataclass
class SynthInfo:
    """Ground truth about a generated stream (ids are post-renumbering)."""

    attacker_ids: list[int]
    suspect: int | None
    victim_ids: list[int]
    late_joiner_ids: list[int]
    first_attack_index: int | None
    attack_start_time: float | None
    config: SynthConfig


ATTACK_NAMES = ["Flood", "Scan", "Probe", "Exfil"]


def synth_generate(config: SynthConfig | None = None):
    """Generate a labeled stream plus ground-truth info; fully deterministic
    per seed, timestamps quantized to milliseconds so CSV round-trips are
    exact, node ids renumbered to first-appearance order so the canonical
    CSV reloads to the identical stream."""
    cfg = config or SynthConfig()
    rng = np.random.default_rng(cfg.seed)
    d_e = cfg.d_e

    members = [
        [i for i in range(cfg.n_nodes) if i * cfg.communities // cfg.n_nodes == c]
        for c in range(cfg.communities)
    ]
    protos = rng.uniform(0.15, 0.85, size=(3, d_e))
    comm_pref = rng.integers(0, 3, size=cfg.communities)

    benign_times = np.cumsum(rng.exponential(1.0 / cfg.benign_rate, cfg.n_benign_events))
    span_end = float(benign_times[-1]) if cfg.n_benign_events else 0.0
    window_start = span_end * (1.0 - cfg.attack_window_fraction)

    # Late joiners: the last member of the first `late_joiners` communities
    # only starts emitting/receiving traffic at a random point inside the
    # attack window, then takes over a share of its community's benign
    # traffic — so "node never seen in training" is not by itself an attack
    # signature.
    activation = np.zeros(cfg.n_nodes)
    joiners = [members[c][-1] for c in range(cfg.late_joiners)]
    act_hi = window_start + 0.6 * (span_end - window_start)
    for node, t0 in zip(joiners, np.sort(rng.uniform(window_start, act_hi, len(joiners)))):
        activation[node] = t0
    joiner_set = set(joiners)
    node_comm = {m: c for c, mem in enumerate(members) for m in mem}

    src_l, dst_l, t_l, f_l, lab_l = [], [], [], [], []

    def benign_event(t, community, forced_src=None):
        if forced_src is not None:
            s = forced_src
            community = node_comm[s]
            mem = [m for m in members[community] if activation[m] <= t]
        else:
            mem = [m for m in members[community] if activation[m] <= t]
            weights = np.ones(len(mem))
            weights[: max(1, len(mem) // 5)] = 4.0  # hubs attract traffic
            s = mem[rng.choice(len(mem), p=weights / weights.sum())]
        if len(mem) > 1 and rng.uniform() < 0.95:
            peers = [m for m in mem if m != s]
            weights = np.ones(len(peers))
            weights[: max(1, len(peers) // 5)] = 4.0
            d = peers[rng.choice(len(peers), p=weights / weights.sum())]
        else:
            d = s
            while d == s or activation[d] > t:
                d = int(rng.integers(0, cfg.n_nodes))
        if rng.uniform() < 0.7:
            proto = protos[comm_pref[community]]
        else:
            proto = protos[rng.integers(0, 3)]
        feats = np.clip(proto + rng.normal(0.0, cfg.feature_noise, d_e), 0.0, 1.0)
        src_l.append(s)
        dst_l.append(d)
        t_l.append(t)
        f_l.append(feats)
        lab_l.append(NORMAL)

    for t in benign_times:
        active_joiners = [j for j in joiners if activation[j] <= t]
        if active_joiners and rng.uniform() < cfg.late_joiner_share:
            picked = active_joiners[int(rng.integers(0, len(active_joiners)))]
            benign_event(t, node_comm[picked], forced_src=picked)
        else:
            benign_event(t, int(rng.integers(0, cfg.communities)))

    attackers: list[int] = []
    victims: list[int] = []
    attack_start = None
    if cfg.n_attack_events > 0:
        attackers = [cfg.n_nodes + a for a in range(cfg.attacker_count)]
        victim_comm = int(rng.integers(0, cfg.communities))
        victim_pool = [m for m in members[victim_comm] if m not in joiner_set]
        victims = [
            int(v)
            for v in rng.choice(victim_pool, size=min(3, len(victim_pool)), replace=False)
        ]
        w0 = window_start
        w1 = w0 + cfg.attack_subwindow * (span_end - w0)
        attack_proto = protos[int(rng.integers(0, 3))].copy()
        flip = rng.choice([-1.0, 1.0], size=d_e)
        attack_proto = np.clip(attack_proto + cfg.attack_feature_shift * flip, 0.0, 1.0)

        share = np.full(len(attackers), cfg.n_attack_events // len(attackers))
        share[: cfg.n_attack_events % len(attackers)] += 1
        first_attack_time = None
        for a_i, attacker in enumerate(attackers):
            counts = np.full(cfg.episodes_per_attacker, int(share[a_i]) // cfg.episodes_per_attacker)
            counts[: int(share[a_i]) % cfg.episodes_per_attacker] += 1
            name = ATTACK_NAMES[a_i % len(ATTACK_NAMES)]
            for count in counts:
                if count == 0:
                    continue
                start = rng.uniform(w0, w1)
                times = start + np.cumsum(rng.exponential(1.0 / cfg.attack_rate, count))
                if first_attack_time is None or times[0] < first_attack_time:
                    first_attack_time = float(times[0])
                for t in times:
                    src_l.append(attacker)
                    dst_l.append(int(rng.choice(victims)))
                    t_l.append(float(t))
                    f_l.append(
                        np.clip(attack_proto + rng.normal(0.0, cfg.feature_noise, d_e), 0.0, 1.0)
                    )
                    lab_l.append(name)
        attack_start = w0

        if cfg.hard_mode and cfg.n_suspect_normal > 0:
            # The suspect's benign-looking traffic starts no earlier than the
            # first attack so the suspect id never leaks into train/val under
            # a first-attack split.
            suspect = attackers[0]
            home = int(rng.integers(0, cfg.communities))
            lo = first_attack_time if first_attack_time is not None else w0
            times = np.sort(rng.uniform(lo, span_end, cfg.n_suspect_normal))
            for t in times:
                mem = [m for m in members[home] if activation[m] <= t]
                d = mem[int(rng.integers(0, len(mem)))]
                proto = protos[comm_pref[home]]
                src_l.append(suspect)
                dst_l.append(int(d))
                t_l.append(float(t))
                f_l.append(np.clip(proto + rng.normal(0.0, cfg.feature_noise, d_e), 0.0, 1.0))
                lab_l.append(NORMAL)

    times = np.round(np.asarray(t_l, dtype=np.float64), 3)   # millisecond grid
    order = np.argsort(times, kind="stable")
    src = np.asarray(src_l, dtype=np.int64)[order]
    dst = np.asarray(dst_l, dtype=np.int64)[order]
    times = times[order]
    feats = (
        np.asarray(f_l, dtype=np.float64)[order]
        if f_l
        else np.zeros((0, d_e))
    )
    labels = [lab_l[i] for i in order]

    # renumber to first-appearance order so the canonical CSV reloads as-is
    remap: dict[int, int] = {}
    for i in range(len(src)):
        for v in (int(src[i]), int(dst[i])):
            if v not in remap:
                remap[v] = len(remap)
    src = np.array([remap[int(v)] for v in src], dtype=np.int64)
    dst = np.array([remap[int(v)] for v in dst], dtype=np.int64)

    stream = EventStream.from_arrays(src, dst, times, feats, labels)
    first_attack = next((i for i, lab in enumerate(labels) if lab not in (NORMAL, None)), None)
    info = SynthInfo(
        attacker_ids=[remap[a] for a in attackers],
        suspect=remap[attackers[0]] if cfg.hard_mode and attackers else None,
        victim_ids=[remap[v] for v in victims],
        late_joiner_ids=sorted(remap[j] for j in joiners if j in remap),
        first_attack_index=first_attack,
        attack_start_time=attack_start,
        config=cfg,
    )
    return stream, info


def default_split(stream: EventStream, train_share: float = 0.8) -> SplitSpec:
    """A split that puts everything before the first non-Normal event into
    train+val (``train_share`` of it into train)."""
    first_attack = next(
        (i for i, lab in enumerate(stream.labels) if lab not in (NORMAL, None)), len(stream)
    )
    n_train = max(1, int(math.floor(first_attack * train_share)))
    return SplitSpec(n_train=n_train, n_val=first_attack - n_train)
