"""Input validation helpers shared by the estimator API."""

from __future__ import annotations

import numpy as np

from .checkpoint import Checkpoint


def check_text_records(X) -> list[str]:
    """Coerce to a list of text records, rejecting non-string entries."""
    if isinstance(X, str):
        raise TypeError("expected an iterable of records, got a single string")
    records = list(X)
    for i, record in enumerate(records):
        if not isinstance(record, str):
            raise TypeError(f"record {i} is not a string: {type(record).__name__}")
    return records


def check_token_stream(X, vocab_size: int | None = None) -> np.ndarray:
    """Coerce to a 1-D int64 token stream, optionally bounds-checked."""
    arr = np.asarray(X)
    if not np.issubdtype(arr.dtype, np.integer):
        raise TypeError(f"token stream must be integer-typed, got {arr.dtype}")
    arr = arr.ravel().astype(np.int64)
    if arr.size == 0:
        raise ValueError("token stream is empty")
    if arr.min() < 0:
        raise ValueError("token ids must be non-negative")
    if vocab_size is not None and arr.max() >= vocab_size:
        raise ValueError(f"token id {arr.max()} exceeds vocab_size {vocab_size}")
    return arr


def check_token_matrix(X, vocab_size: int | None = None) -> np.ndarray:
    """Coerce to a 2-D [batch, seq] int64 token array."""
    arr = np.asarray(X)
    if not np.issubdtype(arr.dtype, np.integer):
        raise TypeError(f"tokens must be integer-typed, got {arr.dtype}")
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"tokens must be [batch, seq], got shape {arr.shape}")
    arr = arr.astype(np.int64)
    if arr.size == 0:
        raise ValueError("token array is empty")
    if arr.min() < 0:
        raise ValueError("token ids must be non-negative")
    if vocab_size is not None and arr.max() >= vocab_size:
        raise ValueError(f"token id {arr.max()} exceeds vocab_size {vocab_size}")
    return arr


def check_checkpoint(X) -> Checkpoint:
    if not isinstance(X, Checkpoint):
        raise TypeError(f"expected a Checkpoint, got {type(X).__name__}")
    return X
