from __future__ import annotations

import json
from pathlib import Path

from .base import BatchLoss, Seq2SeqBackend
from .mock import ArithmeticMockBackend, CannedSeq2SeqBackend
from .tiny import TinyGRUSeq2Seq, Vocab

__all__ = [
    "BatchLoss",
    "Seq2SeqBackend",
    "ArithmeticMockBackend",
    "CannedSeq2SeqBackend",
    "TinyGRUSeq2Seq",
    "Vocab",
    "load_backend",
]

_LOADERS = {
    "tiny-gru": TinyGRUSeq2Seq.load,
    "arithmetic-mock": ArithmeticMockBackend.load,
    "canned": CannedSeq2SeqBackend.load,
}


def load_backend(directory: str | Path) -> Seq2SeqBackend:
    """Load a checkpoint, dispatching on the ``kind`` recorded inside it."""
    directory = Path(directory)
    for meta_name in ("hparams.json", "state.json"):
        meta = directory / meta_name
        if meta.exists():
            kind = json.loads(meta.read_text(encoding="utf-8")).get("kind")
            if kind not in _LOADERS:
                raise ValueError(f"unknown backend kind {kind!r} in {meta}")
            return _LOADERS[kind](directory)
    raise FileNotFoundError(f"no backend checkpoint found in {directory}")
