"""Link-prediction baseline on the same temporal encoder.

The encoder is identical to the detector's; a two-layer MLP decoder maps the
concatenated endpoint embeddings to the logit of the event's probability p.
Training is self-supervised binary cross-entropy: every observed event is a
positive, paired with one uniformly random destination (never the true one)
as a negative.  As a detector the model scores each event 1 - p, thresholded
at the same train-quantile rule as the one-class head.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..ctdg import EventStream, NeighborIndex, chronological_batches, concat_streams
from ..encoder import EncoderParams, MemoryStore, embed_batch, feature_table, init_encoder_params
from ..svdd import ATTACK, NORMAL, FitConfig, _batch_embeddings


@dataclass
class DecoderParams:
    w1: ad.Parameter  # (2p, p)
    b1: ad.Parameter  # (p,)
    w2: ad.Parameter  # (p, 1)
    b2: ad.Parameter  # (1,)

    def all(self) -> list[ad.Parameter]:
        return [self.w1, self.b1, self.w2, self.b2]


def init_decoder_params(p: int, rng: np.random.Generator) -> DecoderParams:
    def glorot(fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))

    return DecoderParams(
        w1=ad.Parameter(glorot(2 * p, p), "dec.w1"),
        b1=ad.Parameter(np.zeros(p), "dec.b1"),
        w2=ad.Parameter(glorot(p, 1), "dec.w2"),
        b2=ad.Parameter(np.zeros(1), "dec.b2"),
    )


def link_logits(z_src: ad.Tensor, z_dst: ad.Tensor, dec: DecoderParams) -> ad.Tensor:
    """(B,) logits for event probability from embedding pairs."""
    h = ad.relu(ad.add(ad.matmul(ad.concat([z_src, z_dst], axis=1), dec.w1), dec.b1))
    out = ad.add(ad.matmul(h, dec.w2), dec.b2)
    return ad.reshape(out, (out.data.shape[0],))


@dataclass
class VanillaTgnModel:
    params: EncoderParams
    decoder: DecoderParams
    config: FitConfig
    tau: float | None = None
    history: dict = field(default_factory=dict)


def vanilla_tgn_fit(train: EventStream, config: FitConfig | None = None) -> VanillaTgnModel:
    """Train encoder + decoder with one random negative per observed event."""
    if len(train) == 0:
        raise ValueError("vanilla_tgn_fit: empty training stream")
    config = config or FitConfig()
    if train.node_count < 2:
        raise ValueError("need at least 2 nodes to sample negative destinations")
    rng = np.random.default_rng(config.seed)
    params = init_encoder_params(config.dims, rng)
    dec = init_decoder_params(config.dims.p, rng)
    index = NeighborIndex.from_stream(train)
    csr = index.csr(train.node_count)
    feat_ext = ad.constant(feature_table(train))

    all_params = params.all() + dec.all()
    adam = ad.Adam(all_params, lr=config.lr, weight_decay=config.weight_decay)
    memory = MemoryStore(train.node_count, config.dims.d_m)

    epoch_losses: list[float] = []
    for _ in range(config.epochs):
        memory.reset()
        total, count = 0.0, 0
        for batch in chronological_batches(train, config.batch_size):
            mem_T = memory.materialize(params)
            z_src, z_dst = _batch_embeddings(
                batch, mem_T, csr, feat_ext, params, config.n_neighbors
            )
            neg = rng.integers(0, train.node_count - 1, size=len(batch))
            neg = np.where(neg >= batch.dst, neg + 1, neg)   # never the true destination
            z_neg = embed_batch(
                neg, batch.times, mem_T, csr, feat_ext, params, config.n_neighbors
            )
            pos_logit = link_logits(z_src, z_dst, dec)
            neg_logit = link_logits(z_src, z_neg, dec)
            nll = ad.sum_(ad.log_sigmoid(pos_logit)) + ad.sum_(ad.log_sigmoid(-neg_logit))
            loss = nll * (-1.0 / (2 * len(batch)))
            adam.zero_grad()
            ad.backward(loss, all_params)
            adam.step()
            memory.stage(batch)
            total += float(loss.data) * len(batch)
            count += len(batch)
        epoch_losses.append(total / count)
    return VanillaTgnModel(
        params=params, decoder=dec, config=config, history={"epoch_bce": epoch_losses}
    )


def _replay_probs(model: VanillaTgnModel, stream: EventStream) -> np.ndarray:
    """Event probabilities p from a zero-memory replay."""
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
            logits = link_logits(z_src, z_dst, model.decoder)
            out.append(ad.sigmoid(logits).data)
            memory.stage(batch)
    return np.concatenate(out)


def vanilla_tgn_scores(
    model: VanillaTgnModel, stream: EventStream, warmup: tuple[EventStream, ...] = ()
) -> np.ndarray:
    """Per-event anomaly score 1 - p over a replayed timeline."""
    parts = [s for s in warmup if len(s)] + [stream]
    combined = concat_streams(parts) if len(parts) > 1 else stream
    return 1.0 - _replay_probs(model, combined)[-len(stream):]


def vanilla_tgn_calibrate(model: VanillaTgnModel, train: EventStream, q: float = 0.99) -> float:
    """Threshold = q-quantile of replayed train scores (as for the detector)."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile must lie in (0,1), got {q}")
    scores = vanilla_tgn_scores(model, train)
    model.tau = float(np.quantile(scores, q))
    return model.tau


def vanilla_tgn_predict(
    model: VanillaTgnModel, stream: EventStream, warmup: tuple[EventStream, ...] = ()
):
    """Scores plus Normal/Attack labels at the calibrated threshold."""
    if model.tau is None:
        raise ValueError("vanilla_tgn_predict: threshold not calibrated")
    scores = vanilla_tgn_scores(model, stream, warmup)
    return scores, [ATTACK if s > model.tau else NORMAL for s in scores]
