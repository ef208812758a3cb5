"""One-class hypersphere head, training loop, calibration, and prediction.

An event is scored by the squared distance between the concatenation of its
two endpoint embeddings and a learned center.  Training minimizes the mean
score over benign traffic (the weight-norm regularizer is realized as
decoupled weight decay inside the optimizer, with the center exempt), pulling
normal behavior toward the center so that unusual events stand out by
distance.  The alarm threshold is the empirical quantile of training scores
under a replay of the trained model; prediction replays the stream and flags
events whose score strictly exceeds it.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .ctdg import EventStream, NeighborIndex, chronological_batches, concat_streams
from .encoder import (
    EncoderDims,
    EncoderParams,
    MemoryStore,
    apply_pending,
    build_pending,
    embed_batch,
    feature_table,
    init_encoder_params,
    params_from_arrays,
)

ATTACK = "Attack"
NORMAL = "Normal"


@dataclass
class SvddHead:
    """Trainable hypersphere center in the concatenated-embedding space."""

    center: ad.Parameter  # (2p,), excluded from weight decay

    @classmethod
    def zeros(cls, p: int) -> "SvddHead":
        return cls(center=ad.Parameter(np.zeros(2 * p), "svdd.center", decay=False))


def score_event(z_i, z_j, head: SvddHead) -> ad.Tensor:
    """Squared distance of [z_i | z_j] to the center, as a scalar tensor."""
    zi = z_i if isinstance(z_i, ad.Tensor) else ad.constant(np.asarray(z_i, dtype=np.float64))
    zj = z_j if isinstance(z_j, ad.Tensor) else ad.constant(np.asarray(z_j, dtype=np.float64))
    if zi.data.ndim != 1 or zj.data.ndim != 1:
        raise ad.ShapeError(f"score_event expects vectors, got {zi.data.shape}, {zj.data.shape}")
    if zi.data.shape[0] + zj.data.shape[0] != head.center.data.shape[0]:
        raise ad.ShapeError(
            f"embedding dims {zi.data.shape[0]}+{zj.data.shape[0]} "
            f"do not match center dim {head.center.data.shape[0]}"
        )
    return ad.squared_l2_norm(ad.concat([zi, zj], axis=0) - head.center)


def score_batch(z_src: ad.Tensor, z_dst: ad.Tensor, head: SvddHead) -> ad.Tensor:
    """Per-event scores for batched (B, p) embedding pairs -> (B,)."""
    pair = ad.concat([z_src, z_dst], axis=1)
    if pair.data.shape[1] != head.center.data.shape[0]:
        raise ad.ShapeError(
            f"pair dim {pair.data.shape[1]} does not match center dim "
            f"{head.center.data.shape[0]}"
        )
    diff = pair - head.center
    return ad.sum_(ad.mul(diff, diff), axis=1)


def svdd_loss(scores: ad.Tensor) -> ad.Tensor:
    """Mean event score (the optimizer applies weight decay separately)."""
    if scores.data.size == 0:
        raise ValueError("svdd_loss: empty score batch")
    return ad.mean(scores)


@dataclass(frozen=True)
class FitConfig:
    """Training knobs for the detector (and the link-prediction baseline)."""

    dims: EncoderDims = field(default_factory=EncoderDims)
    epochs: int = 25
    batch_size: int = 200
    n_neighbors: int = 10
    lr: float = 1e-4
    weight_decay: float = 1e-4
    quantile: float = 0.99
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.n_neighbors < 1:
            raise ValueError("epochs, batch_size, n_neighbors must be >= 1")
        if not 0.0 < self.quantile < 1.0:
            raise ValueError(f"quantile must lie in (0,1), got {self.quantile}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")


@dataclass
class TgnSvddModel:
    params: EncoderParams
    head: SvddHead
    config: FitConfig
    tau: float | None = None
    history: dict = field(default_factory=dict)


def _batch_embeddings(batch, mem_T, csr, feat_ext, params, n_neighbors):
    z_src = embed_batch(batch.src, batch.times, mem_T, csr, feat_ext, params, n_neighbors)
    z_dst = embed_batch(batch.dst, batch.times, mem_T, csr, feat_ext, params, n_neighbors)
    return z_src, z_dst


def _init_center(train, params, config, csr, feat_ext) -> np.ndarray:
    """Mean concatenated embedding of the first batch under fresh weights."""
    first = next(chronological_batches(train, config.batch_size))
    mem = MemoryStore(train.node_count, params.dims.d_m)
    with ad.no_grad():
        z_src, z_dst = _batch_embeddings(
            first, ad.constant(mem.values), csr, feat_ext, params, config.n_neighbors
        )
    return np.concatenate([z_src.data, z_dst.data], axis=1).mean(axis=0)


def fit(train: EventStream, config: FitConfig | None = None) -> TgnSvddModel:
    """Train encoder and center on a benign stream.

    Per epoch: memory zeroed, batches visited chronologically; each batch is
    embedded against memory as of the previous batch, scored, and stepped,
    and its messages are folded into memory on the next batch's tape (one
    GRU step of gradient history).  Returns the model with the threshold
    still uncalibrated.
    """
    if len(train) == 0:
        raise ValueError("fit: empty training stream")
    config = config or FitConfig()
    rng = np.random.default_rng(config.seed)
    params = init_encoder_params(config.dims, rng)
    index = NeighborIndex.from_stream(train)
    csr = index.csr(train.node_count)
    feat_ext = ad.constant(feature_table(train))

    head = SvddHead.zeros(config.dims.p)
    head.center.data[:] = _init_center(train, params, config, csr, feat_ext)

    all_params = params.all() + [head.center]
    adam = ad.Adam(all_params, lr=config.lr, weight_decay=config.weight_decay)
    memory = MemoryStore(train.node_count, config.dims.d_m)

    epoch_means: list[float] = []
    batch_means: list[float] = []
    last_scores = np.zeros(0)
    for _ in range(config.epochs):
        memory.reset()
        collected: list[np.ndarray] = []
        for batch in chronological_batches(train, config.batch_size):
            mem_T = memory.materialize(params)
            z_src, z_dst = _batch_embeddings(
                batch, mem_T, csr, feat_ext, params, config.n_neighbors
            )
            scores = score_batch(z_src, z_dst, head)
            loss = svdd_loss(scores)
            adam.zero_grad()
            ad.backward(loss, all_params)
            adam.step()
            memory.stage(batch)
            collected.append(scores.data)
            batch_means.append(float(loss.data))
        last_scores = np.concatenate(collected)
        epoch_means.append(float(last_scores.mean()))

    std, mean_ = float(last_scores.std()), float(last_scores.mean())
    if std < 1e-10 and mean_ < 1e-10:
        warnings.warn(
            f"possible hypersphere collapse: train score std={std:.3e}, mean={mean_:.3e}",
            RuntimeWarning,
        )
    history = {
        "epoch_mean_score": epoch_means,
        "batch_mean_score": batch_means,
        "final_score_std": std,
        "final_score_mean": mean_,
    }
    return TgnSvddModel(params=params, head=head, config=config, history=history)


def replay_scores(model: TgnSvddModel, stream: EventStream) -> np.ndarray:
    """Deterministic per-event scores from a zero-memory replay of ``stream``."""
    if len(stream) == 0:
        raise ValueError("replay_scores: empty stream")
    params, config = model.params, model.config
    index = NeighborIndex.from_stream(stream)
    csr = index.csr(stream.node_count)
    feat_ext = ad.constant(feature_table(stream))
    memory = MemoryStore(stream.node_count, config.dims.d_m)
    out: list[np.ndarray] = []
    with ad.no_grad():
        for batch in chronological_batches(stream, config.batch_size):
            mem_T = memory.materialize(params)
            z_src, z_dst = _batch_embeddings(
                batch, mem_T, csr, feat_ext, params, config.n_neighbors
            )
            out.append(score_batch(z_src, z_dst, model.head).data)
            memory.stage(batch)
    return np.concatenate(out)


def calibrate_threshold(model: TgnSvddModel, train: EventStream, q: float = 0.99) -> float:
    """Set the alarm threshold to the q-quantile of replayed train scores."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile must lie in (0,1), got {q}")
    if len(train) == 0:
        raise ValueError("calibrate_threshold: empty stream")
    scores = replay_scores(model, train)
    model.tau = float(np.quantile(scores, q))
    return model.tau


def predict_stream(
    model: TgnSvddModel, stream: EventStream, warmup: tuple[EventStream, ...] = ()
) -> tuple[np.ndarray, list[str]]:
    """Scores and Normal/Attack labels for ``stream``.

    Memory is carried through the ``warmup`` streams (typically train and
    validation) so the scored stream continues one timeline.  Every event
    updates memory regardless of its predicted label; an event is flagged
    only when its score strictly exceeds the threshold.
    """
    if model.tau is None:
        raise ValueError("predict_stream: threshold not calibrated")
    parts = [s for s in warmup if len(s)] + [stream]
    combined = concat_streams(parts) if len(parts) > 1 else stream
    scores = replay_scores(model, combined)[-len(stream):]
    labels = [ATTACK if s > model.tau else NORMAL for s in scores]
    return scores, labels


def full_rollout_loss(
    stream: EventStream,
    params: EncoderParams,
    head: SvddHead,
    batch_size: int,
    n_neighbors: int,
) -> ad.Tensor:
    """Mean event score over the stream with memory kept on tape throughout.

    Unlike ``fit`` (which truncates gradient history at batch boundaries),
    every GRU fold here stays connected, so finite differences over the
    returned scalar see the complete parameter dependency.  Used by the
    gradient-correctness checks.
    """
    index = NeighborIndex.from_stream(stream)
    csr = index.csr(stream.node_count)
    feat_ext = ad.constant(feature_table(stream))
    mem = ad.constant(np.zeros((stream.node_count, params.dims.d_m)))
    last_update = np.zeros(stream.node_count)
    total = None
    for batch in chronological_batches(stream, batch_size):
        z_src, z_dst = _batch_embeddings(batch, mem, csr, feat_ext, params, n_neighbors)
        scores = score_batch(z_src, z_dst, head)
        total = ad.sum_(scores) if total is None else total + ad.sum_(scores)
        mem = apply_pending(mem, build_pending(batch, last_update), params)
    return total * (1.0 / len(stream))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_model(path, model: TgnSvddModel):
    extra = {
        "tau": model.tau,
        "config": asdict(model.config),
        "history": model.history,
    }
    ad.save_checkpoint(path, model.params.all() + [model.head.center], extra=extra)


def load_model(path) -> TgnSvddModel:
    arrays, extra = ad.load_checkpoint(path)
    cfg_doc = dict(extra["config"])
    dims = EncoderDims(**cfg_doc.pop("dims"))
    config = FitConfig(dims=dims, **cfg_doc)
    params = params_from_arrays(dims, arrays)
    head = SvddHead(center=ad.Parameter(arrays["svdd.center"], "svdd.center", decay=False))
    return TgnSvddModel(
        params=params,
        head=head,
        config=config,
        tau=extra.get("tau"),
        history=extra.get("history", {}),
    )
