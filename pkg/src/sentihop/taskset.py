"""Assembly of the multi-task training corpus: prediction, explanation, and
verification instances distinguished by task prefixes."""

from __future__ import annotations

import hashlib
import json
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .corpus import Dataset, Example, slice_dataset
from .prompts import explain_input, predict_input, render_verify
from .rationale import Rationale, RationaleRecord, VerificationSignal

TASKS = ("predict", "explain", "verify")
PREFIXES = {"predict": "predict: ", "explain": "explain: ", "verify": "verify: "}
VERIFY_TARGETS = ("True", "False")


class AssemblyError(Exception):
    pass


@dataclass(frozen=True)
class TrainingInstance:
    example_id: str
    task: str
    input_text: str
    target_text: str

    def to_json_obj(self) -> dict:
        return {
            "example_id": self.example_id,
            "task": self.task,
            "input_text": self.input_text,
            "target_text": self.target_text,
        }


@dataclass(frozen=True)
class TaskSet:
    instances: tuple[TrainingInstance, ...]
    mode: str
    with_verification: bool
    seed: int
    counts: dict

    def by_task(self, task: str) -> list[TrainingInstance]:
        return [inst for inst in self.instances if inst.task == task]

    def __len__(self) -> int:
        return len(self.instances)


def build_predict(example: Example) -> TrainingInstance:
    """Prediction task row: direct question in, gold polarity word out."""
    return TrainingInstance(
        example_id=example.id,
        task="predict",
        input_text=PREFIXES["predict"] + predict_input(example),
        target_text=example.polarity,
    )


def build_explain(example: Example, rationale: Rationale, mode: str) -> TrainingInstance:
    """Explanation task row: the three-hop question (scaffold omitted, so the
    model must generate it) in, the teacher rationale out verbatim."""
    if not rationale.text:
        raise AssemblyError(f"example {example.id!r}: rationale text is empty")
    return TrainingInstance(
        example_id=example.id,
        task="explain",
        input_text=PREFIXES["explain"] + explain_input(example, mode),
        target_text=rationale.text,
    )


def build_verify(
    example: Example, rationale: Rationale, signal: VerificationSignal
) -> TrainingInstance:
    """Verification task row: the verify prompt wrapping the rationale in,
    the literal word True or False out."""
    if signal.example_id != example.id:
        raise AssemblyError(
            f"verification signal for {signal.example_id!r} does not match "
            f"example {example.id!r}"
        )
    target = "True" if signal.value else "False"
    return TrainingInstance(
        example_id=example.id,
        task="verify",
        input_text=PREFIXES["verify"] + render_verify(rationale.text, example.id).text,
        target_text=target,
    )


def assemble(
    dataset: Dataset,
    rationales: Mapping[str, RationaleRecord],
    mode: str = "re",
    with_verification: bool = True,
    seed: int = 0,
    strict: bool = True,
    allow_non_re_verification: bool = False,
) -> TaskSet:
    """Build the multi-task set over the train split.

    Under the strict policy every train example must have a rationale;
    otherwise missing examples contribute only their prediction row.
    Verification signals come from reasoning-mode rationales, so
    ``with_verification`` requires ``mode == "re"`` unless explicitly
    overridden. Instances are shuffled with the recorded seed.
    """
    if mode not in ("re", "ra"):
        raise AssemblyError(f"mode must be 're' or 'ra', got {mode!r}")
    if with_verification and mode != "re" and not allow_non_re_verification:
        raise AssemblyError(
            "verification signals are derived from reasoning-mode rationales; "
            "pass allow_non_re_verification=True to override"
        )

    train = slice_dataset(dataset, "train")
    missing = [ex.id for ex in train if ex.id not in rationales]
    if strict and missing:
        raise AssemblyError(f"missing rationales for train examples: {missing}")

    instances: list[TrainingInstance] = []
    verify_targets: Counter = Counter()
    for ex in train:
        instances.append(build_predict(ex))
        rec = rationales.get(ex.id)
        if rec is None:
            continue
        instances.append(build_explain(ex, rec.rationale, mode))
        if with_verification:
            inst = build_verify(ex, rec.rationale, rec.verification)
            verify_targets[inst.target_text] += 1
            instances.append(inst)

    rng = random.Random(seed)
    rng.shuffle(instances)

    task_counts = Counter(inst.task for inst in instances)
    counts = {
        "total": len(instances),
        "per_task": dict(sorted(task_counts.items())),
        "verify_targets": dict(sorted(verify_targets.items())),
        "train_examples": len(train),
        "missing_rationales": len(missing),
    }
    return TaskSet(
        instances=tuple(instances),
        mode=mode,
        with_verification=with_verification,
        seed=seed,
        counts=counts,
    )


def save_taskset(taskset: TaskSet, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for inst in taskset.instances:
            fh.write(json.dumps(inst.to_json_obj(), ensure_ascii=False) + "\n")
    return path


def load_taskset(
    path: str | Path, mode: str, with_verification: bool, seed: int
) -> TaskSet:
    instances: list[TrainingInstance] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            instances.append(
                TrainingInstance(
                    example_id=obj["example_id"],
                    task=obj["task"],
                    input_text=obj["input_text"],
                    target_text=obj["target_text"],
                )
            )
    task_counts = Counter(inst.task for inst in instances)
    verify_targets = Counter(
        inst.target_text for inst in instances if inst.task == "verify"
    )
    counts = {
        "total": len(instances),
        "per_task": dict(sorted(task_counts.items())),
        "verify_targets": dict(sorted(verify_targets.items())),
    }
    return TaskSet(
        instances=tuple(instances),
        mode=mode,
        with_verification=with_verification,
        seed=seed,
        counts=counts,
    )


def dataset_digest(path: str | Path) -> str:
    """Content hash of a source artifact, recorded in build manifests."""
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
