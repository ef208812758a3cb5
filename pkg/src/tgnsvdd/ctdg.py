"""Continuous-time dynamic graph primitives.

A network trace is modelled as a time-ordered stream of directed interaction
events (src, dst, time, feature vector, label).  This module owns the three
core structures:

- :class:`Event` / :class:`EventStream` -- the event list itself,
- :class:`NeighborIndex` -- per-node, time-sorted interaction history
  supporting "most recent n neighbors strictly before t" queries,
- :func:`snapshot` / :func:`chronological_batches` -- static views and
  contiguous mini-batches over the stream.

Timestamps are nonnegative seconds (float64).  Equal timestamps are allowed
(real flow exports collide at millisecond resolution); ties keep ingestion
order, and neighbor queries use a strict ``< t`` cut so same-timestamp events
never see each other.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

NORMAL = "Normal"


def is_attack(label: str | None) -> bool:
    """True for any attack label; Normal and unlabeled (None) are not attacks."""
    return label is not None and label != NORMAL


class StreamError(ValueError):
    """Raised when an event violates stream ordering or shape invariants."""


@dataclass(frozen=True)
class Event:
    """One timestamped directed interaction."""

    src: int
    dst: int
    time: float
    features: np.ndarray
    label: str | None = NORMAL

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        if self.time < 0:
            raise StreamError(f"event time must be nonnegative, got {self.time}")
        if self.src < 0 or self.dst < 0:
            raise StreamError(f"node ids must be nonnegative, got ({self.src}, {self.dst})")


class EventStream:
    """Time-ordered columnar store of events with fixed feature width.

    Internally keeps growable numpy columns so both incremental appends and
    bulk construction stay cheap.  Instances are treated as immutable once
    building is finished; read-only array views are handed out directly.
    """

    def __init__(self, d_e: int):
        if d_e < 0:
            raise StreamError(f"feature dimension must be nonnegative, got {d_e}")
        self.d_e = int(d_e)
        self._n = 0
        cap = 16
        self._src = np.empty(cap, dtype=np.int64)
        self._dst = np.empty(cap, dtype=np.int64)
        self._time = np.empty(cap, dtype=np.float64)
        self._feat = np.empty((cap, self.d_e), dtype=np.float64)
        self._labels: list[str | None] = []

    # -- construction ------------------------------------------------------

    @classmethod
    def from_arrays(cls, src, dst, time, features, labels=None) -> "EventStream":
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        time = np.asarray(time, dtype=np.float64)
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise StreamError(f"features must be 2-D (events x d_e), got shape {features.shape}")
        n, d_e = features.shape
        if not (len(src) == len(dst) == len(time) == n):
            raise StreamError("column lengths disagree")
        if n and np.any(np.diff(time) < 0):
            bad = int(np.argmax(np.diff(time) < 0)) + 1
            raise StreamError(f"timestamps not nondecreasing at event {bad}")
        if n and time[0] < 0:
            raise StreamError("timestamps must be nonnegative")
        if n and (src.min() < 0 or dst.min() < 0):
            raise StreamError("node ids must be nonnegative")
        stream = cls(d_e)
        stream._n = n
        stream._src = src.copy()
        stream._dst = dst.copy()
        stream._time = time.copy()
        stream._feat = features.copy()
        stream._labels = list(labels) if labels is not None else [NORMAL] * n
        if len(stream._labels) != n:
            raise StreamError("label column length disagrees")
        return stream

    def _grow(self):
        cap = max(32, 2 * len(self._src))
        for name in ("_src", "_dst", "_time"):
            old = getattr(self, name)
            new = np.empty(cap, dtype=old.dtype)
            new[: self._n] = old[: self._n]
            setattr(self, name, new)
        feat = np.empty((cap, self.d_e), dtype=np.float64)
        feat[: self._n] = self._feat[: self._n]
        self._feat = feat

    def _append(self, ev: Event):
        if ev.features.shape != (self.d_e,):
            raise StreamError(
                f"feature dimension mismatch: stream has d_e={self.d_e}, "
                f"event has {ev.features.shape}"
            )
        if self._n and ev.time < self._time[self._n - 1]:
            raise StreamError(
                f"out-of-order timestamp at event {self._n}: "
                f"{ev.time} < {self._time[self._n - 1]}"
            )
        if self._n == len(self._src):
            self._grow()
        i = self._n
        self._src[i] = ev.src
        self._dst[i] = ev.dst
        self._time[i] = ev.time
        self._feat[i] = ev.features
        self._labels.append(ev.label)
        self._n += 1

    # -- access ------------------------------------------------------------

    def __len__(self) -> int:
        return self._n

    def __getitem__(self, i: int) -> Event:
        if not -self._n <= i < self._n:
            raise IndexError(i)
        i %= self._n
        return Event(
            int(self._src[i]), int(self._dst[i]), float(self._time[i]),
            self._feat[i].copy(), self._labels[i],
        )

    @property
    def src(self) -> np.ndarray:
        return self._src[: self._n]

    @property
    def dst(self) -> np.ndarray:
        return self._dst[: self._n]

    @property
    def times(self) -> np.ndarray:
        return self._time[: self._n]

    @property
    def features(self) -> np.ndarray:
        return self._feat[: self._n]

    @property
    def labels(self) -> list[str | None]:
        return self._labels

    @property
    def node_count(self) -> int:
        """Number of dense node ids (max id + 1); 0 for an empty stream."""
        if self._n == 0:
            return 0
        return int(max(self.src.max(), self.dst.max())) + 1

    def slice(self, start: int, stop: int) -> "EventStream":
        return EventStream.from_arrays(
            self.src[start:stop], self.dst[start:stop], self.times[start:stop],
            self.features[start:stop], self._labels[start:stop],
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.d_e == other.d_e
            and len(self) == len(other)
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.features, other.features)
            and self.labels == other.labels
        )

    def __repr__(self) -> str:
        return f"EventStream(events={self._n}, d_e={self.d_e}, nodes={self.node_count})"


def concat_streams(streams: list[EventStream]) -> EventStream:
    """Concatenate time-contiguous streams (used by batching round-trips)."""
    streams = [s for s in streams if len(s)]
    if not streams:
        return EventStream(0)
    d_e = streams[0].d_e
    labels: list[str | None] = []
    for s in streams:
        labels.extend(s.labels)
    return EventStream.from_arrays(
        np.concatenate([s.src for s in streams]),
        np.concatenate([s.dst for s in streams]),
        np.concatenate([s.times for s in streams]),
        np.concatenate([s.features for s in streams]),
        labels,
    )


# direction flags stored in the index
DIR_OUT = 0  # node was the event's source
DIR_IN = 1  # node was the event's destination


class NeighborIndex:
    """Per-node, time-ordered interaction history.

    Every event contributes one entry to its source's list and one to its
    destination's list (two entries in the same list for self-loops), so a
    node's list length equals its multigraph degree.  Lists are sorted by
    event time because ingestion is time-ordered.

    A frozen CSR view (see :meth:`csr`) is cached for batched queries in the
    hot encoding path and invalidated by further appends.
    """

    def __init__(self, stream: EventStream | None = None):
        self.stream = stream
        self._nbr: dict[int, list[int]] = {}
        self._time: dict[int, list[float]] = {}
        self._eidx: dict[int, list[int]] = {}
        self._dir: dict[int, list[int]] = {}
        self._csr = None

    @classmethod
    def from_stream(cls, stream: EventStream) -> "NeighborIndex":
        index = cls(stream)
        src, dst, times = stream.src, stream.dst, stream.times
        for k in range(len(stream)):
            index._add(int(src[k]), int(dst[k]), float(times[k]), k)
        return index

    def _add(self, src: int, dst: int, time: float, eidx: int):
        for node, other, direction in ((src, dst, DIR_OUT), (dst, src, DIR_IN)):
            self._nbr.setdefault(node, []).append(other)
            self._time.setdefault(node, []).append(time)
            self._eidx.setdefault(node, []).append(eidx)
            self._dir.setdefault(node, []).append(direction)
        self._csr = None

    def entries(self, node: int):
        """Raw (neighbor, time, event-index, direction) lists for one node."""
        return (
            self._nbr.get(node, []),
            self._time.get(node, []),
            self._eidx.get(node, []),
            self._dir.get(node, []),
        )

    def degree(self, node: int) -> int:
        return len(self._nbr.get(node, []))

    def csr(self, node_count: int | None = None):
        """Frozen (ptr, nbr, time, eidx) arrays for batched kernel queries."""
        if node_count is None:
            node_count = self.stream.node_count if self.stream is not None else (
                max(self._nbr) + 1 if self._nbr else 0
            )
        if self._csr is not None and len(self._csr[0]) == node_count + 1:
            return self._csr
        counts = np.zeros(node_count + 1, dtype=np.int64)
        for node, lst in self._nbr.items():
            counts[node + 1] = len(lst)
        ptr = np.cumsum(counts)
        total = int(ptr[-1])
        nbr = np.empty(total, dtype=np.int64)
        time = np.empty(total, dtype=np.float64)
        eidx = np.empty(total, dtype=np.int64)
        for node, lst in self._nbr.items():
            lo, hi = ptr[node], ptr[node] + len(lst)
            nbr[lo:hi] = lst
            time[lo:hi] = self._time[node]
            eidx[lo:hi] = self._eidx[node]
        self._csr = (ptr, nbr, time, eidx)
        return self._csr


def append_event(stream: EventStream, index: NeighborIndex, ev: Event):
    """Append one event to a stream and its neighbor index.

    Rejects out-of-order timestamps (naming the offending event index) and
    feature-dimension mismatches.  Returns the same (stream, index) pair for
    chaining.
    """
    eidx = len(stream)
    stream._append(ev)  # validates ordering and dimension
    index._add(ev.src, ev.dst, ev.time, eidx)
    if index.stream is None:
        index.stream = stream
    return stream, index


def temporal_neighbors(index: NeighborIndex, node: int, t: float, n: int):
    """Up to ``n`` most recent interactions of ``node`` strictly before ``t``.

    Returns a list of (neighbor-id, event-time, features, direction) tuples,
    most recent first.  Unknown nodes simply have no history.
    """
    if n < 1:
        raise StreamError(f"neighbor count must be >= 1, got {n}")
    times = index._time.get(node)
    if not times:
        return []
    hi = bisect.bisect_left(times, t)
    lo = max(0, hi - n)
    nbrs = index._nbr[node]
    eidx = index._eidx[node]
    dirs = index._dir[node]
    feats = index.stream.features if index.stream is not None else None
    out = []
    for k in range(hi - 1, lo - 1, -1):
        f = feats[eidx[k]] if feats is not None else None
        out.append((nbrs[k], times[k], f, dirs[k]))
    return out


@dataclass
class Snapshot:
    """Static multigraph of all events up to (and including) a time."""

    nodes: set[int] = field(default_factory=set)
    edges: list[tuple[int, int]] = field(default_factory=list)


def snapshot(stream: EventStream, t: float) -> Snapshot:
    """Vertex set and edge multiset of every event with time <= t."""
    hi = int(np.searchsorted(stream.times, t, side="right"))
    snap = Snapshot()
    for k in range(hi):
        i, j = int(stream.src[k]), int(stream.dst[k])
        snap.nodes.add(i)
        snap.nodes.add(j)
        snap.edges.append((i, j))
    return snap


def chronological_batches(stream: EventStream, batch_size: int):
    """Contiguous event slices in time order.

    All batches have ``batch_size`` events except possibly the last;
    concatenating them reproduces the stream exactly.
    """
    if batch_size < 1:
        raise StreamError(f"batch_size must be >= 1, got {batch_size}")
    for start in range(0, len(stream), batch_size):
        yield stream.slice(start, min(start + batch_size, len(stream)))
