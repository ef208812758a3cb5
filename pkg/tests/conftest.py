"""Shared helpers for the test suites."""

import numpy as np
import pytest

from tgnsvdd.ctdg import Event, EventStream, NORMAL


def random_stream(rng, n_events=100, n_nodes=10, d_e=4, span=100.0, labels=None):
    """Time-sorted random stream with duplicate timestamps sprinkled in."""
    times = np.sort(rng.uniform(0.0, span, n_events))
    if n_events > 3:
        times[n_events // 2] = times[n_events // 2 - 1]  # force a tie
    src = rng.integers(0, n_nodes, n_events)
    dst = rng.integers(0, n_nodes, n_events)
    feats = rng.normal(0.0, 1.0, (n_events, d_e))
    return EventStream.from_arrays(src, dst, times, feats, labels)


def tiny_stream():
    """Fixed 6-event, 4-node stream used by hand-computed oracles."""
    return EventStream.from_arrays(
        src=[0, 1, 2, 0, 3, 1],
        dst=[1, 2, 0, 2, 0, 0],
        time=[0.0, 1.0, 2.0, 2.0, 3.5, 5.0],
        features=[[0.1, 0.2], [0.3, 0.4], [0.5, 0.6], [0.7, 0.8], [0.9, 1.0], [1.1, 1.2]],
        labels=[NORMAL] * 6,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)
