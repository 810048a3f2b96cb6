"""Abstract contract for trainable sequence-to-sequence backends.

A backend exposes teacher-forced loss on (input, target) text batches, text
generation, a weighted-update step, and checkpoint save/load. Losses are
token-mean per batch.
"""

from __future__ import annotations

import abc
from pathlib import Path
from typing import Any, Sequence


class BatchLoss:
    """A scalar loss plus whatever handle the backend needs to backprop it.

    ``value`` is always a plain float; ``payload`` is backend-specific (a
    tensor for the torch backend, None for mocks).
    """

    __slots__ = ("value", "payload")

    def __init__(self, value: float, payload: Any = None):
        self.value = float(value)
        self.payload = payload

    def __repr__(self) -> str:
        return f"BatchLoss({self.value:.6g})"


class Seq2SeqBackend(abc.ABC):
    @abc.abstractmethod
    def loss_batch(self, inputs: Sequence[str], targets: Sequence[str]) -> BatchLoss:
        """Teacher-forced token-mean loss for one homogeneous batch."""

    @abc.abstractmethod
    def apply_update(self, weighted: Sequence[tuple[BatchLoss, float]]) -> None:
        """One optimizer step on the weighted sum of the given losses."""

    @abc.abstractmethod
    def generate(self, inputs: Sequence[str], max_new_tokens: int) -> list[str]:
        """Greedy generation, one output string per input."""

    @abc.abstractmethod
    def save(self, directory: str | Path) -> None:
        """Write a self-contained checkpoint into ``directory``."""
