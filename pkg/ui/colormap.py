"""Value-to-colour mapping for attention heatmaps (no Qt dependency)."""

import numpy as np
from matplotlib import colormaps

_VIRIDIS = colormaps["viridis"]


def heat_color(value: float, vmin: float, vmax: float) -> tuple[int, int, int]:
    """RGB for value on viridis; out-of-range values clamp."""
    if not np.isfinite(value):
        return (0, 0, 0)
    span = vmax - vmin
    t = 0.5 if span <= 0 else min(max((value - vmin) / span, 0.0), 1.0)
    r, g, b, _ = _VIRIDIS(t)
    return tuple(int(round(255 * c)) for c in (r, g, b))


def matrix_range(matrix) -> tuple[float, float]:
    m = np.asarray(matrix, dtype=np.float64)
    if m.size == 0:
        return 0.0, 1.0
    return float(m.min()), float(m.max())
