"""Memory-based temporal graph encoder.

Each node carries a memory vector summarizing its interaction history.  An
event ``(i, j, t, e)`` produces one message per endpoint -- the concatenation
of both endpoint memories, a learnable cosine encoding of the time since the
endpoint's previous update, and the edge features -- and a GRU folds the most
recent message per node into that node's memory.  Node embeddings come from
one round of multi-head attention over the node's most recent strictly-prior
neighbors, with the query built from the node's memory and a zero-delta time
encoding.

Batch semantics: a batch is scored against memory as of the end of the
previous batch, and the single GRU application that folds a batch's messages
is kept on tape for the *next* batch's loss, so gradients reach the GRU and
time-encoder weights without ever crossing more than one batch boundary
(``stage``/``materialize``).  ``compute_messages``/``update_memory`` are the
eager equivalents used for replay and direct inspection; called in batch
order they produce bit-identical memory to the staged path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .ctdg import EventStream, NeighborIndex
from .kernels import get_kernels


@dataclass(frozen=True)
class EncoderDims:
    """Dimension bundle: memory d_m, time encoding d_t, embedding p, edge
    features d_e, attention heads."""

    d_m: int = 32
    d_t: int = 32
    p: int = 32
    d_e: int = 8
    heads: int = 2

    def __post_init__(self):
        for field in ("d_m", "d_t", "p", "d_e", "heads"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive, got {getattr(self, field)}")
        if self.p % self.heads:
            raise ValueError(f"embedding dim {self.p} not divisible by {self.heads} heads")

    @property
    def msg_dim(self) -> int:
        return 2 * self.d_m + self.d_t + self.d_e


@dataclass
class EncoderParams:
    """All trainable encoder weights plus their dimension bundle."""

    dims: EncoderDims
    omega: ad.Parameter       # (d_t,) time-encoding frequencies
    time_bias: ad.Parameter   # (d_t,) time-encoding phases
    w_ih: ad.Parameter        # (3*d_m, msg_dim) GRU input weights
    w_hh: ad.Parameter        # (3*d_m, d_m) GRU hidden weights
    b_ih: ad.Parameter
    b_hh: ad.Parameter
    w_q: ad.Parameter         # (d_m + d_t, p) query projection
    w_k: ad.Parameter         # (d_m + d_e + d_t, p) key projection
    w_v: ad.Parameter         # (d_m + d_e + d_t, p) value projection
    w_out: ad.Parameter       # (p, p) output projection
    b_out: ad.Parameter       # (p,)

    def all(self) -> list[ad.Parameter]:
        return [
            self.omega, self.time_bias,
            self.w_ih, self.w_hh, self.b_ih, self.b_hh,
            self.w_q, self.w_k, self.w_v, self.w_out, self.b_out,
        ]


def _glorot(rng, fan_in, fan_out):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


def init_encoder_params(dims: EncoderDims, rng: np.random.Generator) -> EncoderParams:
    """Fresh weights: multi-scale geometric time frequencies (periods from
    ~1 s to ~1e5 s), uniform +-1/sqrt(d_m) GRU weights, Glorot attention
    projections, zero biases."""
    d_m, d_t, p, d_e = dims.d_m, dims.d_t, dims.p, dims.d_e
    if d_t > 1:
        omega = np.power(10.0, -np.linspace(0.0, 5.0, d_t))
    else:
        omega = np.ones(1)
    lim = 1.0 / np.sqrt(d_m)
    kv_in = d_m + d_e + d_t
    return EncoderParams(
        dims=dims,
        omega=ad.Parameter(omega, "time.omega"),
        time_bias=ad.Parameter(np.zeros(d_t), "time.bias"),
        w_ih=ad.Parameter(rng.uniform(-lim, lim, size=(3 * d_m, dims.msg_dim)), "gru.w_ih"),
        w_hh=ad.Parameter(rng.uniform(-lim, lim, size=(3 * d_m, d_m)), "gru.w_hh"),
        b_ih=ad.Parameter(rng.uniform(-lim, lim, size=3 * d_m), "gru.b_ih"),
        b_hh=ad.Parameter(rng.uniform(-lim, lim, size=3 * d_m), "gru.b_hh"),
        w_q=ad.Parameter(_glorot(rng, d_m + d_t, p), "attn.w_q"),
        w_k=ad.Parameter(_glorot(rng, kv_in, p), "attn.w_k"),
        w_v=ad.Parameter(_glorot(rng, kv_in, p), "attn.w_v"),
        w_out=ad.Parameter(_glorot(rng, p, p), "attn.w_out"),
        b_out=ad.Parameter(np.zeros(p), "attn.b_out"),
    )


def params_from_arrays(dims: EncoderDims, arrays: dict[str, np.ndarray]) -> EncoderParams:
    """Rebuild parameters from a checkpoint payload (names as in init)."""
    def P(name):
        return ad.Parameter(arrays[name], name)

    return EncoderParams(
        dims=dims,
        omega=P("time.omega"), time_bias=P("time.bias"),
        w_ih=P("gru.w_ih"), w_hh=P("gru.w_hh"), b_ih=P("gru.b_ih"), b_hh=P("gru.b_hh"),
        w_q=P("attn.w_q"), w_k=P("attn.w_k"), w_v=P("attn.w_v"),
        w_out=P("attn.w_out"), b_out=P("attn.b_out"),
    )


def encode_time(dt, omega: ad.Tensor, time_bias: ad.Tensor) -> ad.Tensor:
    """cos(omega * dt + bias), elementwise over the d_t frequencies.

    Scalar ``dt`` gives a (d_t,) vector; an array of M deltas gives (M, d_t).
    """
    arr = np.asarray(dt, dtype=np.float64)
    if np.any(arr < 0):
        raise ValueError("time delta must be nonnegative")
    scalar = arr.ndim == 0
    col = ad.constant(arr.reshape(-1, 1))
    phi = ad.cos(ad.add(ad.mul(col, omega), time_bias))
    if scalar:
        phi = ad.reshape(phi, (omega.data.shape[0],))
    return phi


# ---------------------------------------------------------------------------
# memory
# ---------------------------------------------------------------------------


@dataclass
class PendingBatch:
    """Per-node last-message ingredients staged for the next GRU fold."""

    nodes: np.ndarray   # (K,) touched node ids, one entry per node
    other: np.ndarray   # (K,) the opposite endpoint of the kept message
    dt: np.ndarray      # (K,) event time minus the node's prior last_update
    feat: np.ndarray    # (K, d_e) edge features of the kept message


def build_pending(batch: EventStream, last_update: np.ndarray) -> PendingBatch:
    """Last-message aggregation over a batch.

    Keeps, per touched node, the ingredients of its most recent message
    (later stream position wins ties) with the time delta measured against
    the node's pre-batch ``last_update``, then advances ``last_update`` in
    place to the kept event times.
    """
    kept: dict[int, tuple[int, int, float]] = {}
    src, dst, times = batch.src, batch.dst, batch.times
    for i in range(len(batch)):
        kept[int(src[i])] = (int(dst[i]), i, float(times[i]))
        kept[int(dst[i])] = (int(src[i]), i, float(times[i]))
    nodes = np.fromiter(kept.keys(), dtype=np.int64, count=len(kept))
    other = np.array([kept[int(n)][0] for n in nodes], dtype=np.int64)
    rows = np.array([kept[int(n)][1] for n in nodes], dtype=np.int64)
    t_msg = np.array([kept[int(n)][2] for n in nodes], dtype=np.float64)
    pending = PendingBatch(
        nodes=nodes, other=other, dt=t_msg - last_update[nodes], feat=batch.features[rows]
    )
    last_update[nodes] = t_msg
    return pending


def apply_pending(mem: ad.Tensor, pending: PendingBatch, params: EncoderParams) -> ad.Tensor:
    """Fold staged messages through the GRU; returns the new memory tensor.

    Message halves read ``mem`` as it stands (the pre-batch state); the GRU
    application itself is on tape, so the caller's loss can reach the GRU and
    time-encoder weights.
    """
    s_node = ad.gather_rows(mem, pending.nodes)
    s_other = ad.gather_rows(mem, pending.other)
    msg = ad.concat(
        [s_node, s_other, encode_time(pending.dt, params.omega, params.time_bias),
         ad.constant(pending.feat)],
        axis=1,
    )
    h_new = ad.gru_cell(msg, s_node, params.w_ih, params.w_hh, params.b_ih, params.b_hh)
    return ad.scatter_rows(mem, pending.nodes, h_new)


class MemoryStore:
    """Per-node memory vectors with last-update times and a staged batch."""

    def __init__(self, n_nodes: int, d_m: int):
        if n_nodes <= 0:
            raise ValueError(f"n_nodes must be positive, got {n_nodes}")
        self.values = np.zeros((n_nodes, d_m))
        self.last_update = np.zeros(n_nodes)
        self._pending: PendingBatch | None = None

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    def reset(self):
        self.values[:] = 0.0
        self.last_update[:] = 0.0
        self._pending = None

    def stage(self, batch: EventStream):
        """Record a batch's last messages for the next materialize call."""
        if self._pending is not None:
            raise RuntimeError("a staged batch is already pending; materialize first")
        self._pending = build_pending(batch, self.last_update)

    def materialize(self, params: EncoderParams) -> ad.Tensor:
        """Fold the staged batch (if any) and return the memory tensor.

        The returned tensor is on tape; its values are committed to the
        store immediately, so the numbers never depend on when the caller
        discards the tape.
        """
        base = ad.constant(self.values)
        if self._pending is None:
            return base
        out = apply_pending(base, self._pending, params)
        self.values = out.data
        self._pending = None
        return out


def reset_memory(memory: MemoryStore) -> MemoryStore:
    """Zero every memory vector and last-update time."""
    memory.reset()
    return memory


@dataclass
class Messages:
    """Per-event endpoint messages, interleaved in stream order.

    Row ``2i`` is event ``i``'s source message, row ``2i+1`` its destination
    message, so positional order doubles as recency order.
    """

    nodes: np.ndarray    # (2B,) receiving node of each message
    times: np.ndarray    # (2B,) event times
    vectors: ad.Tensor   # (2B, msg_dim)


def compute_messages(batch: EventStream, memory: MemoryStore, params: EncoderParams) -> Messages:
    """Messages for every event of the batch against current memory.

    Each is [own memory | other endpoint memory | time encoding of the gap
    since the node's last update | edge features]; memory is only read.
    """
    src, dst, times = batch.src, batch.dst, batch.times
    mem_src = ad.constant(memory.values[src])
    mem_dst = ad.constant(memory.values[dst])
    feat = ad.constant(batch.features)
    phi_src = encode_time(times - memory.last_update[src], params.omega, params.time_bias)
    phi_dst = encode_time(times - memory.last_update[dst], params.omega, params.time_bias)
    m_src = ad.concat([mem_src, mem_dst, phi_src, feat], axis=1)
    m_dst = ad.concat([mem_dst, mem_src, phi_dst, feat], axis=1)
    vectors = ad.reshape(ad.concat([m_src, m_dst], axis=1), (2 * len(batch), params.dims.msg_dim))
    nodes = np.empty(2 * len(batch), dtype=np.int64)
    nodes[0::2], nodes[1::2] = src, dst
    out_times = np.empty(2 * len(batch))
    out_times[0::2] = out_times[1::2] = times
    return Messages(nodes=nodes, times=out_times, vectors=vectors)


def update_memory(memory: MemoryStore, messages: Messages, params: EncoderParams) -> MemoryStore:
    """Keep each node's most recent message and fold it through the GRU.

    Untouched nodes keep their memory bit-identical; touched nodes also get
    ``last_update`` advanced to the kept message's time.
    """
    keep: dict[int, int] = {}
    for pos, node in enumerate(messages.nodes):
        keep[int(node)] = pos
    sel = np.fromiter(keep.values(), dtype=np.int64, count=len(keep))
    nodes = messages.nodes[sel]
    x = ad.gather_rows(messages.vectors, sel)
    h = ad.constant(memory.values[nodes])
    h_new = ad.gru_cell(x, h, params.w_ih, params.w_hh, params.b_ih, params.b_hh)
    memory.values[nodes] = h_new.data
    memory.last_update[nodes] = messages.times[sel]
    return memory


# ---------------------------------------------------------------------------
# attention embedding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Embedding:
    """A node's embedding vector at a query time."""

    z: np.ndarray
    node: int
    time: float


def feature_table(stream: EventStream) -> np.ndarray:
    """Event features with a trailing all-zero row for padded slots."""
    return np.vstack([stream.features, np.zeros((1, stream.features.shape[1]))])


def embed_batch(
    nodes: np.ndarray,
    times: np.ndarray,
    mem: ad.Tensor,
    csr: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    feat_ext: ad.Tensor,
    params: EncoderParams,
    n_neighbors: int,
    return_attn: bool = False,
):
    """Multi-head attention embeddings for a batch of (node, time) queries.

    Queries project [memory | time encoding of 0]; keys/values project
    [neighbor memory | edge features | time encoding of the query-to-event
    gap] over the up-to-``n_neighbors`` most recent strictly-prior events.
    A node with no prior events attends over one all-zero key/value slot, so
    its embedding is the output projection's constant.
    """
    if n_neighbors < 1:
        raise ValueError(f"n_neighbors must be >= 1, got {n_neighbors}")
    dims = params.dims
    B, n = len(nodes), n_neighbors
    K = get_kernels()
    ptr, nbr, ntime, neidx = csr
    ids, t_nbr, eidx, mask = K.gather_neighbors(
        ptr, nbr, ntime, neidx,
        np.ascontiguousarray(nodes, dtype=np.int64),
        np.ascontiguousarray(times, dtype=np.float64),
        n,
    )
    live = mask.copy()                        # real-neighbor indicator
    empty = mask.sum(axis=1) == 0
    mask[empty, 0] = 1.0                      # zero pad slot for isolated nodes
    dt = np.where(live > 0, times[:, None] - t_nbr, 0.0)

    n_mem_rows = mem.data.shape[0]
    mem_ext = ad.concat([mem, ad.constant(np.zeros((1, dims.d_m)))], axis=0)
    ids_flat = np.where(ids < 0, n_mem_rows, ids).reshape(-1)
    eidx_flat = np.where(eidx < 0, feat_ext.data.shape[0] - 1, eidx).reshape(-1)

    phi_nbr = encode_time(dt.reshape(-1), params.omega, params.time_bias)
    phi_nbr = ad.mul(phi_nbr, ad.constant(live.reshape(-1, 1)))
    kv_in = ad.concat(
        [ad.gather_rows(mem_ext, ids_flat), ad.gather_rows(feat_ext, eidx_flat), phi_nbr],
        axis=1,
    )
    q_in = ad.concat(
        [ad.gather_rows(mem_ext, nodes), encode_time(np.zeros(B), params.omega, params.time_bias)],
        axis=1,
    )

    H, dk = dims.heads, dims.p // dims.heads
    q = ad.reshape(ad.matmul(q_in, params.w_q), (B, 1, H, dk))
    k = ad.reshape(ad.matmul(kv_in, params.w_k), (B, n, H, dk))
    v = ad.reshape(ad.matmul(kv_in, params.w_v), (B, n, H, dk))
    logits = ad.mul(ad.sum_(ad.mul(q, k), axis=3), ad.constant(1.0 / np.sqrt(dk)))
    logits = ad.transpose(logits, (0, 2, 1))                        # (B, H, n)
    bias = ad.constant(((mask - 1.0) * 1e30)[:, None, :])
    attn = ad.softmax(ad.add(logits, bias), axis=-1)                # (B, H, n)
    v_heads = ad.transpose(v, (0, 2, 1, 3))                         # (B, H, n, dk)
    mixed = ad.sum_(ad.mul(ad.reshape(attn, (B, H, n, 1)), v_heads), axis=2)
    out = ad.add(ad.matmul(ad.reshape(mixed, (B, dims.p)), params.w_out), params.b_out)
    if return_attn:
        return out, attn.data
    return out


def embed(
    node: int,
    t: float,
    memory: MemoryStore,
    index: NeighborIndex,
    params: EncoderParams,
    n_neighbors: int = 10,
) -> Embedding:
    """Embedding of one node at time ``t`` against current memory."""
    if index.stream is None:
        raise ValueError("neighbor index is not bound to a stream")
    csr = index.csr(max(memory.n_nodes, node + 1))
    feat_ext = ad.constant(feature_table(index.stream))
    with ad.no_grad():
        out = embed_batch(
            np.array([node], dtype=np.int64),
            np.array([t], dtype=np.float64),
            ad.constant(memory.values),
            csr,
            feat_ext,
            params,
            n_neighbors,
        )
    z = out.data[0]
    if not np.all(np.isfinite(z)):
        raise FloatingPointError(f"non-finite embedding for node {node} at t={t}")
    return Embedding(z=z, node=int(node), time=float(t))
