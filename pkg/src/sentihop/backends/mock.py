"""Deterministic mock backends for exercising the training loop and the
evaluation path without real optimization."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

from .base import BatchLoss, Seq2SeqBackend


class ArithmeticMockBackend(Seq2SeqBackend):
    """Loss is a closed-form function of batch size and update count:

        loss = (base + per_item * batch_size) * decay ** updates

    so every logged training step can be checked by hand arithmetic.
    """

    def __init__(
        self,
        base: float = 8.0,
        per_item: float = 0.5,
        decay: float = 0.9,
        generate_text: str = "neutral",
    ):
        self.base = base
        self.per_item = per_item
        self.decay = decay
        self.generate_text = generate_text
        self.updates = 0

    def expected_loss(self, batch_size: int, updates: int) -> float:
        return (self.base + self.per_item * batch_size) * (self.decay**updates)

    def loss_batch(self, inputs: Sequence[str], targets: Sequence[str]) -> BatchLoss:
        return BatchLoss(self.expected_loss(len(inputs), self.updates))

    def apply_update(self, weighted: Sequence[tuple[BatchLoss, float]]) -> None:
        self.updates += 1

    def generate(self, inputs: Sequence[str], max_new_tokens: int) -> list[str]:
        return [self.generate_text] * len(inputs)

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        state = {
            "kind": "arithmetic-mock",
            "base": self.base,
            "per_item": self.per_item,
            "decay": self.decay,
            "generate_text": self.generate_text,
            "updates": self.updates,
        }
        (directory / "state.json").write_text(json.dumps(state, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "ArithmeticMockBackend":
        state = json.loads((Path(directory) / "state.json").read_text(encoding="utf-8"))
        backend = cls(
            base=state["base"],
            per_item=state["per_item"],
            decay=state["decay"],
            generate_text=state["generate_text"],
        )
        backend.updates = state["updates"]
        return backend


class CannedSeq2SeqBackend(Seq2SeqBackend):
    """Generates from a fixed input-to-output map; useful as an oracle model
    (map every predict input to its gold label) or a constant-output model."""

    def __init__(self, mapping: dict[str, str] | None = None, default: str = ""):
        self.mapping = dict(mapping or {})
        self.default = default
        self.updates = 0

    def loss_batch(self, inputs: Sequence[str], targets: Sequence[str]) -> BatchLoss:
        return BatchLoss(1.0)

    def apply_update(self, weighted: Sequence[tuple[BatchLoss, float]]) -> None:
        self.updates += 1

    def generate(self, inputs: Sequence[str], max_new_tokens: int) -> list[str]:
        return [self.mapping.get(text, self.default) for text in inputs]

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        state = {"kind": "canned", "mapping": self.mapping, "default": self.default}
        (directory / "state.json").write_text(
            json.dumps(state, ensure_ascii=False, indent=2), encoding="utf-8"
        )

    @classmethod
    def load(cls, directory: str | Path) -> "CannedSeq2SeqBackend":
        state = json.loads((Path(directory) / "state.json").read_text(encoding="utf-8"))
        return cls(mapping=state["mapping"], default=state["default"])
