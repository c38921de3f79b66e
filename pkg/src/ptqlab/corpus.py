"""Byte-level corpus loading."""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

BUNDLED = "corpus.txt"


def encode(text: Union[str, bytes]) -> np.ndarray:
    data = text.encode("utf-8") if isinstance(text, str) else bytes(text)
    return np.frombuffer(data, dtype=np.uint8).astype(np.int64)


def decode(tokens) -> str:
    return bytes(np.asarray(tokens, dtype=np.uint8).tolist()).decode("utf-8", errors="replace")


def load_tokens(path: Optional[Union[str, Path]] = None) -> np.ndarray:
    """Byte tokens of ``path``, or of the bundled corpus when ``path`` is None."""
    if path is None:
        data = resources.files("ptqlab").joinpath("data", BUNDLED).read_bytes()
    else:
        data = Path(path).read_bytes()
    return encode(data)


def split(tokens: np.ndarray, valid_fraction: float = 0.1) -> Tuple[np.ndarray, np.ndarray]:
    """Contiguous train / validation split (validation is the tail)."""
    n_valid = int(len(tokens) * valid_fraction)
    return tokens[: len(tokens) - n_valid], tokens[len(tokens) - n_valid :]
