"""Input checks shared by the transformers and the classifier."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_sequences(X, name: str = "X") -> list[np.ndarray]:
    """Coerce a ragged collection of 1-D activity sequences to float arrays."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = check_array(X, dtype=np.float64)
        seqs = list(X)
    else:
        seqs = [np.asarray(s, dtype=np.float64).reshape(-1) for s in X]
    if not seqs:
        raise ValueError(f"{name} is empty")
    for i, s in enumerate(seqs):
        if len(s) == 0:
            raise ValueError(f"{name}[{i}] is an empty sequence")
        if not np.isfinite(s).all():
            raise ValueError(f"{name}[{i}] contains non-finite values")
        if (s < 0).any():
            raise ValueError(f"{name}[{i}] contains negative counts")
    return seqs


def check_binary_labels(y, n: int | None = None) -> np.ndarray:
    y = np.asarray(y).reshape(-1)
    if n is not None and len(y) != n:
        raise ValueError(f"expected {n} labels, got {len(y)}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 (Poor) or 1 (Good)")
    return y.astype(np.int64)


def check_cutpoints(cutpoints) -> tuple[float, float, float]:
    cp = tuple(float(c) for c in cutpoints)
    if len(cp) != 3 or not cp[0] < cp[1] < cp[2]:
        raise ValueError(f"need three strictly increasing cutpoints, got {cutpoints}")
    return cp
