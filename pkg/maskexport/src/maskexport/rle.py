"""Column-major uncompressed run-length codec for binary masks.

Counts alternate 0-runs and 1-runs over the mask flattened column by column,
always starting with a 0-run (which may be empty).  This matches the schema
the tracking pipeline's detections loader expects.
"""

from __future__ import annotations

import numpy as np


def encode(mask: np.ndarray) -> list[int]:
    """Encode a 2-D boolean mask; exact inverse of decode."""
    flat = np.asarray(mask, dtype=bool).reshape(-1, order="F")
    if flat.size == 0:
        return []
    changes = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts = [0] + counts
    return [int(c) for c in counts]


def decode(counts: list[int], size: tuple[int, int]) -> np.ndarray:
    """Decode run lengths back into an (h, w) boolean mask."""
    h, w = int(size[0]), int(size[1])
    cnts = np.asarray(counts, dtype=np.int64)
    if cnts.size and cnts.min() < 0:
        raise ValueError("run lengths must be non-negative")
    if int(cnts.sum()) != h * w:
        raise ValueError(f"run lengths sum to {cnts.sum()}, expected {h * w}")
    values = np.zeros(cnts.size, dtype=bool)
    values[1::2] = True
    return np.repeat(values, cnts).reshape((h, w), order="F")
