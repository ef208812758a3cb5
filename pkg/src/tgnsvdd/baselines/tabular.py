"""Flat per-event view for the shallow detectors.

Each event becomes the row [src-id, dst-id, timestamp, f0, ..., f{d_e-1}],
in stream order, so the shallow models see exactly the same information as
the temporal encoder, ids and timestamps included.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ctdg import EventStream


@dataclass(frozen=True)
class TabularView:
    matrix: np.ndarray  # (D, 3 + d_e) float64

    @classmethod
    def from_stream(cls, stream: EventStream) -> "TabularView":
        return cls(
            matrix=np.column_stack(
                [
                    stream.src.astype(np.float64),
                    stream.dst.astype(np.float64),
                    stream.times,
                    stream.features,
                ]
            )
        )

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_cols(self) -> int:
        return self.matrix.shape[1]
