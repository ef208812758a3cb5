"""One-class intrusion detection on continuous-time dynamic graphs.

A memory-based temporal graph encoder turns each network flow into a pair of
node embeddings; a one-class hypersphere head scores the flow by squared
distance to a learned center.  Classical novelty/outlier baselines and a
link-prediction baseline share the same data model and evaluation protocol.
"""

from .kernels import BACKEND, HAVE_EXT

__version__ = "0.1.0"

__all__ = ["BACKEND", "HAVE_EXT", "__version__"]
