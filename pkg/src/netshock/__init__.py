"""netshock: production-network shock analysis.

Reconstructs firm-level input-output matrices from shipment records, backs
out outside demand from the revenue system, runs network destruction /
adjustment / outside-demand counterfactuals, computes removal-induced
centrality changes, and estimates two-way fixed-effects
difference-in-differences specifications on large panels.
"""

__version__ = "0.1.0"

from .config import EconomyConfig, EngineConfig, StudyWindow
from .errors import NetshockError

__all__ = [
    "__version__",
    "EconomyConfig",
    "EngineConfig",
    "StudyWindow",
    "NetshockError",
]
