"""Kernel backend selection: compiled extension if present, else fallback."""

import os

if os.environ.get("SAGNACSIM_PURE_PYTHON", "") == "1":
    from .fallback import dead_time_mask, delay_histogram, match_count, match_indices

    BACKEND = "python"
else:
    try:
        from ._corex import dead_time_mask, delay_histogram, match_count, match_indices

        BACKEND = "compiled"
    except ImportError:  # extension not built
        from .fallback import dead_time_mask, delay_histogram, match_count, match_indices

        BACKEND = "python"

__all__ = ["BACKEND", "dead_time_mask", "delay_histogram", "match_count", "match_indices"]
