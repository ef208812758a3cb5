"""Randomized invariants over many seeds.

Each property is checked against freshly drawn streams; failures print the
offending seed through the assertion message.
"""

import numpy as np

from tgnsvdd.ctdg import (
    EventStream,
    NeighborIndex,
    chronological_batches,
    concat_streams,
    temporal_neighbors,
)
from tgnsvdd.dataio import (
    SplitSpec,
    SynthConfig,
    chrono_split,
    default_split,
    load_temporal_csv,
    save_temporal_csv,
    stitch_days,
    synth_generate,
)
from tgnsvdd.ctdg import NORMAL

from conftest import random_stream

SEEDS = range(20)


def stream_for(seed, n=60, nodes=8, d_e=3):
    return random_stream(np.random.default_rng(seed), n_events=n, n_nodes=nodes,
                         d_e=d_e, span=40.0)


def test_streams_are_time_monotone():
    for seed in SEEDS:
        s = stream_for(seed)
        assert np.all(np.diff(s.times) >= 0), f"seed {seed}"
        synth, _ = synth_generate(SynthConfig(n_nodes=16, n_benign_events=120,
                                              n_attack_events=20, communities=4,
                                              late_joiners=2, d_e=3, seed=seed))
        assert np.all(np.diff(synth.times) >= 0), f"seed {seed}"


def test_temporal_neighbors_never_leak_the_future():
    for seed in SEEDS:
        s = stream_for(seed)
        index = NeighborIndex.from_stream(s)
        rng = np.random.default_rng(seed + 1000)
        for _ in range(30):
            node = int(rng.integers(0, s.node_count))
            t = float(rng.uniform(0, 45.0))
            for nbr, ev_time, _feats, _direction in temporal_neighbors(index, node, t, 5):
                assert ev_time < t, f"seed {seed}: event at {ev_time} >= query {t}"
                assert 0 <= nbr < s.node_count


def test_stitch_span_is_additive():
    for seed in SEEDS:
        a = stream_for(seed)
        b = stream_for(seed + 500, n=30)
        stitched, _ = stitch_days(a, b)
        span_a = a.times[-1] - a.times[0]
        span_b = b.times[-1] - b.times[0]
        assert stitched.times[0] == 0.0, f"seed {seed}"
        np.testing.assert_allclose(stitched.times[-1], span_a + span_b,
                                   rtol=0, atol=1e-9, err_msg=f"seed {seed}")
        assert np.all(np.diff(stitched.times) >= 0), f"seed {seed}"
        assert len(stitched) == len(a) + len(b), f"seed {seed}"


def test_chrono_split_partitions_without_leaks():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        n = int(rng.integers(10, 80))
        labels = [NORMAL] * n
        s = random_stream(rng, n_events=n, n_nodes=6, d_e=2, labels=labels)
        n_train = int(rng.integers(1, n - 1))
        n_val = int(rng.integers(0, n - n_train))
        train, val, test = chrono_split(s, SplitSpec(n_train=n_train, n_val=n_val))
        assert len(train) + len(val) + len(test) == n, f"seed {seed}"
        joined = concat_streams([p for p in (train, val, test) if len(p)])
        assert joined == s, f"seed {seed}"
        if len(val):
            assert train.times[-1] <= val.times[0], f"seed {seed}"
        if len(test):
            before = val if len(val) else train
            assert before.times[-1] <= test.times[0], f"seed {seed}"


def test_default_split_triggers_on_first_attack():
    for seed in SEEDS:
        synth, info = synth_generate(SynthConfig(n_nodes=16, n_benign_events=150,
                                                 n_attack_events=25, communities=4,
                                                 late_joiners=1, d_e=3, seed=seed))
        spec = default_split(synth)
        assert spec.n_train + spec.n_val == info.first_attack_index, f"seed {seed}"
        train, val, test = chrono_split(synth, spec)
        assert all(lab == NORMAL for lab in train.labels), f"seed {seed}"
        assert all(lab == NORMAL for lab in val.labels), f"seed {seed}"
        assert test.labels[0] != NORMAL, f"seed {seed}"


def test_csv_round_trip_is_exact():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        s = random_stream(rng, n_events=40, n_nodes=7, d_e=2, span=20.0)
        times = np.round(s.times, 3)
        s = EventStream.from_arrays(s.src, s.dst, times, s.features, s.labels)
        path = f"/tmp/prop_round_{seed}.csv"
        save_temporal_csv(path, s)
        loaded, _, _ = load_temporal_csv(path)
        save_temporal_csv(path, loaded)
        again, _, _ = load_temporal_csv(path)
        assert again == loaded, f"seed {seed}"
        np.testing.assert_array_equal(loaded.times, s.times, err_msg=f"seed {seed}")
        np.testing.assert_array_equal(loaded.features, s.features, err_msg=f"seed {seed}")


def test_batching_covers_the_stream_in_order():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 100))
        bs = int(rng.integers(1, 20))
        s = random_stream(rng, n_events=n, n_nodes=6, d_e=2)
        batches = list(chronological_batches(s, bs))
        assert sum(len(b) for b in batches) == n, f"seed {seed}"
        assert all(len(b) <= bs for b in batches), f"seed {seed}"
        rebuilt = concat_streams(batches) if len(batches) > 1 else batches[0]
        assert rebuilt == s, f"seed {seed}"
