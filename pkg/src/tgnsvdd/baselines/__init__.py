"""Reference detectors sharing the detector's data model and protocol:
local outlier factor (novelty and outlier modes), isolation forest, and the
same temporal encoder trained for link prediction and scored as 1 - p."""

from .iforest import IsolationForestModel, fit_iforest, iforest_scores, isolation_forest
from .lof import lof_scores
from .tabular import TabularView
from .vanilla_tgn import (
    VanillaTgnModel,
    vanilla_tgn_calibrate,
    vanilla_tgn_fit,
    vanilla_tgn_predict,
    vanilla_tgn_scores,
)

__all__ = [
    "IsolationForestModel",
    "TabularView",
    "VanillaTgnModel",
    "fit_iforest",
    "iforest_scores",
    "isolation_forest",
    "lof_scores",
    "vanilla_tgn_calibrate",
    "vanilla_tgn_fit",
    "vanilla_tgn_predict",
    "vanilla_tgn_scores",
]
