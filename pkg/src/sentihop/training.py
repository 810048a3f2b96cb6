"""Multi-task fine-tuning: the weighted three-task loss, the training loop,
label prediction from a trained backend, and grid search over the loss
weights on the validation split."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import random
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

from .backends.base import BatchLoss, Seq2SeqBackend
from .corpus import POLARITIES, Example
from .rationale import extract_polarities, resolve_fcfs
from .taskset import PREFIXES, TaskSet, TrainingInstance

FALLBACK_LABEL = "neutral"


class TrainingError(Exception):
    pass


@dataclass(frozen=True)
class LossWeights:
    """Explanation weight alpha and verification weight gamma; the prediction
    task gets the remaining 1 - alpha - gamma."""

    alpha: float
    gamma: float = 0.0

    def __post_init__(self):
        if self.alpha < 0 or self.gamma < 0:
            raise ValueError("alpha and gamma must be >= 0")
        if self.alpha + self.gamma > 1.0:
            raise ValueError("alpha + gamma must be <= 1")

    def coefficients(self) -> dict[str, float]:
        return {
            "explain": self.alpha,
            "verify": self.gamma,
            "predict": 1.0 - self.alpha - self.gamma,
        }


def combine_losses(l_exp: float, l_ver: float, l_pre: float, weights: LossWeights) -> float:
    """alpha * l_exp + gamma * l_ver + (1 - alpha - gamma) * l_pre, exactly.

    With gamma = 0 this reduces to the two-term explanation/prediction form.
    """
    for name, val in (("l_exp", l_exp), ("l_ver", l_ver), ("l_pre", l_pre)):
        if not math.isfinite(val) or val < 0:
            raise ValueError(f"{name} must be finite and >= 0, got {val!r}")
    c = weights.coefficients()
    return c["explain"] * l_exp + c["verify"] * l_ver + c["predict"] * l_pre


@dataclass(frozen=True)
class TrainConfig:
    weights: LossWeights
    epochs: int = 3
    batch_size: int = 8
    learning_rate: float = 2e-3
    max_input_tokens: int = 64
    max_target_tokens: int = 96
    seed: int = 0
    backend_id: str = "tiny-gru"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        for name in ("batch_size", "learning_rate", "max_input_tokens", "max_target_tokens"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass
class StepRecord:
    step: int
    l_exp: float | None
    l_ver: float | None
    l_pre: float
    l_combined: float
    lr: float


@dataclass
class TrainLog:
    steps: list[StepRecord] = field(default_factory=list)
    steps_per_epoch: int = 0

    def epoch_mean_combined(self, epoch: int) -> float:
        """Mean combined loss over one 1-based epoch."""
        lo = (epoch - 1) * self.steps_per_epoch
        hi = epoch * self.steps_per_epoch
        rows = self.steps[lo:hi]
        if not rows:
            raise ValueError(f"no steps logged for epoch {epoch}")
        return sum(r.l_combined for r in rows) / len(rows)

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "l_exp", "l_ver", "l_pre", "l_combined", "lr"])
            for r in self.steps:
                writer.writerow(
                    [
                        r.step,
                        "" if r.l_exp is None else f"{r.l_exp:.6f}",
                        "" if r.l_ver is None else f"{r.l_ver:.6f}",
                        f"{r.l_pre:.6f}",
                        f"{r.l_combined:.6f}",
                        f"{r.lr:.6g}",
                    ]
                )
        return path


@dataclass
class TrainedModel:
    backend: Seq2SeqBackend
    config: TrainConfig
    fallback_log: list[dict] = field(default_factory=list)


def _batches(
    instances: list[TrainingInstance], batch_size: int, n_batches: int, rng: random.Random
) -> list[list[TrainingInstance]]:
    """Cut a shuffled stream into ``n_batches`` batches, cycling when the
    stream is shorter than needed."""
    order = list(instances)
    rng.shuffle(order)
    out: list[list[TrainingInstance]] = []
    pos = 0
    for _ in range(n_batches):
        if pos + batch_size > len(order):
            rng.shuffle(order)
            pos = 0
        out.append(order[pos : pos + batch_size])
        pos += batch_size
    return out


def _check_finite(task: str, loss: BatchLoss, step: int, batch: list[TrainingInstance]) -> None:
    if not math.isfinite(loss.value):
        ids = [inst.example_id for inst in batch]
        raise TrainingError(
            f"non-finite {task} loss at step {step} (batch example ids: {ids})"
        )


def _validation_macro_f1(backend: Seq2SeqBackend, val: Sequence[Example]) -> float:
    # Local import: evaluation depends on this module for predict().
    from .evaluation import macro_f1

    inputs = [PREFIXES["predict"] + _predict_question(ex) for ex in val]
    outputs = backend.generate(inputs, max_new_tokens=8)
    preds = [map_generation(text)[0] for text in outputs]
    return macro_f1(preds, [ex.polarity for ex in val])


def _predict_question(example: Example) -> str:
    from .prompts import predict_input

    return predict_input(example)


def train(
    taskset: TaskSet,
    val: Sequence[Example],
    config: TrainConfig,
    backend: Seq2SeqBackend,
    checkpoint_dir: str | Path | None = None,
) -> tuple[TrainedModel, TrainLog]:
    """Run the multi-task loop: per step, one homogeneous batch per active
    task, losses combined by the configured weights, one optimizer update.

    The prediction stream defines the epoch length; shorter streams cycle.
    Checkpoints land under ``checkpoint_dir/epoch_{k}`` with the best
    validation epoch marked in ``manifest.json``.
    """
    if len(taskset) == 0:
        raise TrainingError("taskset is empty")
    weights = config.weights
    predict_stream = taskset.by_task("predict")
    explain_stream = taskset.by_task("explain")
    verify_stream = taskset.by_task("verify")
    if not predict_stream:
        raise TrainingError("taskset has no predict instances")
    if weights.gamma > 0 and not taskset.with_verification:
        raise TrainingError("gamma > 0 requires a taskset built with verification")
    if weights.gamma > 0 and not verify_stream:
        raise TrainingError("gamma > 0 but the taskset has no verify instances")
    if weights.alpha > 0 and not explain_stream:
        raise TrainingError("alpha > 0 but the taskset has no explain instances")

    active: dict[str, list[TrainingInstance]] = {"predict": predict_stream}
    if weights.alpha > 0:
        active["explain"] = explain_stream
    if weights.gamma > 0:
        active["verify"] = verify_stream
    coeffs = weights.coefficients()

    steps_per_epoch = max(1, math.ceil(len(predict_stream) / config.batch_size))
    log = TrainLog(steps_per_epoch=steps_per_epoch)
    model = TrainedModel(backend=backend, config=config)
    rng = random.Random(config.seed)

    val_scores: list[float] = []
    step = 0
    for epoch in range(1, config.epochs + 1):
        epoch_batches = {
            task: _batches(stream, config.batch_size, steps_per_epoch, rng)
            for task, stream in active.items()
        }
        for k in range(steps_per_epoch):
            step += 1
            losses: dict[str, BatchLoss] = {}
            for task, batches in epoch_batches.items():
                batch = batches[k]
                loss = backend.loss_batch(
                    [inst.input_text for inst in batch],
                    [inst.target_text for inst in batch],
                )
                _check_finite(task, loss, step, batch)
                losses[task] = loss
            l_exp = losses["explain"].value if "explain" in losses else None
            l_ver = losses["verify"].value if "verify" in losses else None
            l_pre = losses["predict"].value
            combined = combine_losses(l_exp or 0.0, l_ver or 0.0, l_pre, weights)
            backend.apply_update([(losses[t], coeffs[t]) for t in losses])
            log.steps.append(
                StepRecord(
                    step=step,
                    l_exp=l_exp,
                    l_ver=l_ver,
                    l_pre=l_pre,
                    l_combined=combined,
                    lr=config.learning_rate,
                )
            )
        if checkpoint_dir is not None:
            backend.save(Path(checkpoint_dir) / f"epoch_{epoch}")
        if val:
            val_scores.append(_validation_macro_f1(backend, val))

    if val_scores:
        # Later epoch wins ties: more training at equal validation score.
        best_epoch = max(range(1, len(val_scores) + 1), key=lambda e: (val_scores[e - 1], e))
    else:
        best_epoch = config.epochs

    if checkpoint_dir is not None:
        manifest = {
            "config": asdict(config),
            "config_digest": config.digest(),
            "best_epoch": best_epoch,
            "epochs": config.epochs,
            "steps_per_epoch": steps_per_epoch,
            "val_macro_f1_per_epoch": val_scores,
            "loss_normalization": "token_mean",
            "active_tasks": sorted(active),
        }
        path = Path(checkpoint_dir) / "manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")

    return model, log


def map_generation(text: str) -> tuple[str, bool]:
    """Map raw generated text into the 3-label alphabet.

    Returns (label, fallback_used). Normalizes (strip, lowercase), accepts an
    exact label, otherwise takes the first whole-word polarity token; when
    nothing maps, falls back to ``neutral`` and flags it.
    """
    norm = text.strip().lower()
    if norm in POLARITIES:
        return norm, False
    resolved = resolve_fcfs(extract_polarities(norm))
    if resolved is not None:
        return resolved, False
    return FALLBACK_LABEL, True


def predict(model: TrainedModel, example: Example) -> str:
    """Generate from the prediction-task input and map to a label; unmappable
    output falls back to ``neutral`` and is flagged in the model's log."""
    input_text = PREFIXES["predict"] + _predict_question(example)
    raw = model.backend.generate([input_text], max_new_tokens=8)[0]
    label, fallback = map_generation(raw)
    if fallback:
        model.fallback_log.append({"example_id": example.id, "raw_output": raw})
    return label


DEFAULT_GRID: tuple[LossWeights, ...] = tuple(
    LossWeights(alpha=a, gamma=g)
    for a in (0.0, 0.1, 0.3, 0.5)
    for g in (0.0, 0.1, 0.3, 0.5)
    if a + g <= 0.9
)


def search_weights(
    taskset: TaskSet,
    val: Sequence[Example],
    grid: Sequence[LossWeights],
    config: TrainConfig,
    backend_factory: Callable[[], Seq2SeqBackend],
) -> tuple[LossWeights, list[dict]]:
    """Greedy grid search: one short training run per grid point, scored by
    overall macro-F1 on the validation examples.

    Per-point training errors are recorded in the table and the search
    continues. Ties prefer larger gamma, then larger alpha.
    """
    if not grid:
        raise ValueError("grid must be non-empty")
    table: list[dict] = []
    for weights in grid:
        row: dict = {"alpha": weights.alpha, "gamma": weights.gamma}
        point_config = replace(config, weights=weights)
        try:
            backend = backend_factory()
            model, _ = train(taskset, val=[], config=point_config, backend=backend)
            row["val_macro_f1"] = _validation_macro_f1(model.backend, list(val))
            row["error"] = ""
        except (TrainingError, ValueError) as exc:
            row["val_macro_f1"] = None
            row["error"] = str(exc)
        table.append(row)

    scored = [r for r in table if r["val_macro_f1"] is not None]
    if not scored:
        raise TrainingError("every grid point failed to train")
    best = max(scored, key=lambda r: (r["val_macro_f1"], r["gamma"], r["alpha"]))
    return LossWeights(alpha=best["alpha"], gamma=best["gamma"]), table
