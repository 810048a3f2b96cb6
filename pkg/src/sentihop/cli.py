"""Command-line pipeline driver.

Subcommands chain through a run directory: ingest -> generate -> build ->
train -> eval -> report, plus search for the loss-weight grid. Every command
reads the previous stage's artifacts by path, writes its own under
``runs/{run_id}/{stage}/``, and prints the paths it produced. Exit code 2
signals validation problems or missing upstream artifacts.
"""

from __future__ import annotations

import argparse
import csv
import json
import shutil
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import corpus, evaluation, figures, llm_gateway, rationale, taskset, training
from .backends import ArithmeticMockBackend, CannedSeq2SeqBackend, TinyGRUSeq2Seq, load_backend
from .config import ConfigError, PipelineConfig, RunPaths, run_paths
from .prompts import PromptMode, render
from .training import DEFAULT_GRID, LossWeights, TrainConfig, TrainedModel


class MissingArtifactError(Exception):
    def __init__(self, path: Path, hint: str):
        super().__init__(f"expected artifact not found: {path} (run `{hint}` first)")
        self.path = path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _write_manifest(path: Path, payload: dict) -> Path:
    payload = {**payload, "created_at": _now()}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    return path


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(path, hint)
    return path


def _load_config(args) -> tuple[PipelineConfig, RunPaths]:
    cfg = PipelineConfig.load(args.config)
    return cfg, run_paths(cfg, args.run_id)


# --------------------------------------------------------------------------
# ingest
# --------------------------------------------------------------------------


def _ingest_dataset(cfg: PipelineConfig) -> tuple[corpus.Dataset, dict]:
    data = cfg.section("data")
    name = data.get("name", "custom")
    info: dict = {"dropped_conflict": 0, "unknown_sidecar_refs": []}
    if "canonical" in data:
        src = Path(data["canonical"])
        if not src.exists():
            raise FileNotFoundError(f"canonical dataset not found: {src}")
        dataset = corpus.load_canonical(src, name=name)
        info["source"] = str(src)
    elif "semeval" in data:
        parts = []
        for entry in data["semeval"]:
            xml = Path(entry["xml"])
            if not xml.exists():
                raise FileNotFoundError(f"SemEval XML not found: {xml}")
            sidecar = entry.get("sidecar")
            if sidecar is not None and not Path(sidecar).exists():
                raise FileNotFoundError(f"implicit-tag sidecar not found: {sidecar}")
            report = corpus.convert_semeval(
                xml, sidecar, split=entry.get("split", "train"), name=name
            )
            parts.append(report.dataset)
            info["dropped_conflict"] += report.dropped_conflict
            info["unknown_sidecar_refs"].extend(report.unknown_sidecar_refs)
        dataset = corpus.merge(parts, name=name)
        info["source"] = [str(e["xml"]) for e in data["semeval"]]
    else:
        raise ConfigError("config needs [data] canonical = ... or [[data.semeval]] tables")
    if data.get("make_validation", False):
        dataset = corpus.hold_out_validation(dataset, data.get("validation_fraction", 0.1))
    return dataset, info


def cmd_ingest(args) -> int:
    cfg, paths = _load_config(args)
    dataset, info = _ingest_dataset(cfg)
    counts = {
        split: len(corpus.slice_dataset(dataset, split)) for split in corpus.SPLITS
    }
    implicit = {
        split: len(corpus.slice_dataset(dataset, split, implicit_only=True))
        for split in corpus.SPLITS
    }
    print(f"ingest: {len(dataset)} examples ({dataset.name})")
    for split in corpus.SPLITS:
        print(f"  {split}: {counts[split]} ({implicit[split]} implicit)")
    if info["dropped_conflict"]:
        print(f"  dropped {info['dropped_conflict']} conflict-polarity terms")
    for ref in info["unknown_sidecar_refs"]:
        print(f"  warning: sidecar tag for unknown example {ref}, ignored")
    if args.validate_only:
        print("validate-only: no files written")
        return 0
    out = corpus.write_canonical(dataset, paths.dataset)
    _write_manifest(
        paths.stage("ingest") / "manifest.json",
        {"counts": counts, "implicit": implicit, **info},
    )
    print(f"wrote {out}")
    return 0


# --------------------------------------------------------------------------
# generate
# --------------------------------------------------------------------------


def _build_generation_backend(cfg: PipelineConfig, examples):
    gen = cfg.section("generate")
    kind = gen.get("backend", "templated-mock")
    if kind == "templated-mock":
        agreement = float(gen.get("agreement", 0.85))
        return llm_gateway.TemplatedMockBackend(
            polarity_by_id=llm_gateway.agreement_polarity_map(examples, agreement),
            aspect_by_id={ex.id: ex.aspect_term for ex in examples},
        )
    if kind == "mock":
        return llm_gateway.MockBackend(canned={}, default=gen.get("mock_text", "neutral"))
    if kind == "openai":
        return llm_gateway.OpenAIChatBackend(
            base_url=cfg.require("generate", "base_url"),
            api_key_env=gen.get("api_key_env", "OPENAI_API_KEY"),
        )
    if kind == "local-http":
        return llm_gateway.LocalTGIBackend(base_url=cfg.require("generate", "base_url"))
    raise ConfigError(f"unknown generation backend {kind!r}")


def cmd_generate(args) -> int:
    cfg, paths = _load_config(args)
    dataset = corpus.load_canonical(
        _require(paths.dataset, "sentihop ingest"), name=cfg.get("data", "name", "custom")
    )
    gen = cfg.section("generate")
    split = gen.get("split", "train")
    examples = corpus.slice_dataset(dataset, split)
    mode = PromptMode(gen.get("mode", "th_re"))
    backend = _build_generation_backend(cfg, examples)
    gateway = llm_gateway.Gateway(
        backend,
        cache_path=paths.cache,
        max_retries=int(gen.get("max_retries", 3)),
        backoff_s=float(gen.get("backoff_s", 0.5)),
    )
    seed = args.seed if args.seed is not None else gen.get("seed")
    requests_ = [
        llm_gateway.GenerationRequest(
            prompt=render(ex, mode),
            generator_id=gen.get("generator_id", "mock-3hop"),
            temperature=float(gen.get("temperature", 0.0)),
            max_new_tokens=int(gen.get("max_new_tokens", 256)),
            seed=seed,
        )
        for ex in examples
    ]
    items = gateway.generate_batch(requests_, max_in_flight=int(gen.get("max_in_flight", 4)))

    by_id = {ex.id: ex for ex in examples}
    records = []
    failures = []
    for item in items:
        ex = by_id[item.request.prompt.example_id]
        if not item.ok:
            failures.append((ex.id, str(item.error)))
            continue
        parsed = rationale.parse_rationale(
            example_id=ex.id,
            mode=mode.value,
            generator_id=item.request.generator_id,
            text=item.record.response_text,
            aspect_term=ex.aspect_term,
        )
        signal = rationale.verification_signal(parsed.resolved, ex.polarity, ex.id)
        records.append(rationale.RationaleRecord(rationale=parsed, verification=signal))

    store_path = rationale.write_store(records, paths.rationales)
    reasons = {}
    for rec in records:
        reasons[rec.verification.reason] = reasons.get(rec.verification.reason, 0) + 1
    print(f"generate: {len(records)} rationales for split {split!r} (mode {mode.value})")
    print(f"  verification: {reasons}")
    print(f"  backend calls this run: {getattr(backend, 'calls', 'n/a')}")
    for ex_id, err in failures:
        print(f"  failure {ex_id}: {err}")
    print(f"wrote {store_path}")
    _write_manifest(
        paths.stage("generate") / "manifest.json",
        {
            "mode": mode.value,
            "split": split,
            "generator_id": gen.get("generator_id", "mock-3hop"),
            "n_rationales": len(records),
            "n_failures": len(failures),
            "verification_reasons": reasons,
        },
    )
    threshold = float(gen.get("failure_threshold", 0.0))
    rate = len(failures) / len(items) if items else 0.0
    if rate > threshold:
        print(f"failure rate {rate:.2%} exceeds threshold {threshold:.2%}", file=sys.stderr)
        return 1
    return 0


# --------------------------------------------------------------------------
# build
# --------------------------------------------------------------------------


def cmd_build(args) -> int:
    cfg, paths = _load_config(args)
    dataset = corpus.load_canonical(
        _require(paths.dataset, "sentihop ingest"), name=cfg.get("data", "name", "custom")
    )
    store = rationale.load_store(_require(paths.rationales, "sentihop generate"))
    build = cfg.section("build")
    seed = args.seed if args.seed is not None else int(build.get("seed", 0))
    ts = taskset.assemble(
        dataset,
        store,
        mode=build.get("mode", "re"),
        with_verification=bool(build.get("with_verification", True)),
        seed=seed,
        strict=bool(build.get("strict", True)),
    )
    out = taskset.save_taskset(ts, paths.taskset)
    _write_manifest(
        paths.build_manifest,
        {
            "mode": ts.mode,
            "with_verification": ts.with_verification,
            "seed": ts.seed,
            "counts": ts.counts,
            "dataset_sha256": taskset.dataset_digest(paths.dataset),
            "rationales_sha256": taskset.dataset_digest(paths.rationales),
        },
    )
    print(f"build: {len(ts)} instances {ts.counts['per_task']}")
    print(f"  verify targets: {ts.counts['verify_targets']}")
    print(f"wrote {out}")
    print(f"wrote {paths.build_manifest}")
    return 0


# --------------------------------------------------------------------------
# train / search
# --------------------------------------------------------------------------


def _train_config(cfg: PipelineConfig, seed_override: int | None) -> TrainConfig:
    tr = cfg.section("train")
    return TrainConfig(
        weights=LossWeights(
            alpha=float(tr.get("alpha", 0.3)), gamma=float(tr.get("gamma", 0.3))
        ),
        epochs=int(tr.get("epochs", 3)),
        batch_size=int(tr.get("batch_size", 8)),
        learning_rate=float(tr.get("learning_rate", 2e-3)),
        max_input_tokens=int(tr.get("max_input_tokens", 64)),
        max_target_tokens=int(tr.get("max_target_tokens", 96)),
        seed=seed_override if seed_override is not None else int(tr.get("seed", 0)),
        backend_id=tr.get("backend_id", "tiny-gru"),
    )


def _new_training_backend(config: TrainConfig, ts: taskset.TaskSet):
    if config.backend_id == "tiny-gru":
        texts = [inst.input_text for inst in ts.instances] + [
            inst.target_text for inst in ts.instances
        ]
        return TinyGRUSeq2Seq.from_texts(
            texts,
            learning_rate=config.learning_rate,
            max_input_tokens=config.max_input_tokens,
            max_target_tokens=config.max_target_tokens,
            seed=config.seed,
        )
    if config.backend_id == "arithmetic-mock":
        return ArithmeticMockBackend()
    if config.backend_id == "canned-gold":
        mapping = {
            inst.input_text: inst.target_text
            for inst in ts.instances
            if inst.task == "predict"
        }
        return CannedSeq2SeqBackend(mapping, default="neutral")
    raise ConfigError(f"unknown training backend {config.backend_id!r}")


def _load_taskset(cfg: PipelineConfig, paths: RunPaths) -> taskset.TaskSet:
    build = cfg.section("build")
    return taskset.load_taskset(
        _require(paths.taskset, "sentihop build"),
        mode=build.get("mode", "re"),
        with_verification=bool(build.get("with_verification", True)),
        seed=int(build.get("seed", 0)),
    )


def cmd_train(args) -> int:
    cfg, paths = _load_config(args)
    ts = _load_taskset(cfg, paths)
    dataset = corpus.load_canonical(
        _require(paths.dataset, "sentihop ingest"), name=cfg.get("data", "name", "custom")
    )
    val = corpus.slice_dataset(dataset, "validation")
    config = _train_config(cfg, args.seed)
    backend = _new_training_backend(config, ts)
    if hasattr(backend, "n_parameters"):
        print(f"train: backend {config.backend_id} with {backend.n_parameters():,} parameters")
    model, log = training.train(ts, val, config, backend, checkpoint_dir=paths.train_dir)
    log_path = log.write_csv(paths.trainlog)
    if log.steps:
        first = log.epoch_mean_combined(1)
        last = log.epoch_mean_combined(config.epochs)
        print(
            f"  combined loss: epoch 1 mean {first:.4f} -> epoch {config.epochs} "
            f"mean {last:.4f}"
        )
    print(f"wrote {log_path}")
    print(f"wrote {paths.train_manifest}")
    return 0


def cmd_search(args) -> int:
    cfg, paths = _load_config(args)
    ts = _load_taskset(cfg, paths)
    dataset = corpus.load_canonical(
        _require(paths.dataset, "sentihop ingest"), name=cfg.get("data", "name", "custom")
    )
    val = corpus.slice_dataset(dataset, "validation")
    search = cfg.section("search")
    base = _train_config(cfg, args.seed)
    from dataclasses import replace

    config = replace(base, epochs=int(search.get("epochs", 1)))
    if "grid" in search:
        grid = [LossWeights(alpha=float(a), gamma=float(g)) for a, g in search["grid"]]
    else:
        grid = list(DEFAULT_GRID)
    best, table = training.search_weights(
        ts, val, grid, config, backend_factory=lambda: _new_training_backend(config, ts)
    )
    paths.search_csv.parent.mkdir(parents=True, exist_ok=True)
    with paths.search_csv.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha", "gamma", "val_macro_f1", "error"])
        for row in table:
            writer.writerow(
                [
                    row["alpha"],
                    row["gamma"],
                    "" if row["val_macro_f1"] is None else f"{row['val_macro_f1']:.6f}",
                    row["error"],
                ]
            )
    best_path = paths.stage("search") / "best.json"
    best_path.write_text(
        json.dumps({"alpha": best.alpha, "gamma": best.gamma}, indent=2), encoding="utf-8"
    )
    print(f"search: best weights alpha={best.alpha} gamma={best.gamma}")
    print(f"wrote {paths.search_csv}")
    print(f"wrote {best_path}")
    return 0


# --------------------------------------------------------------------------
# eval / report
# --------------------------------------------------------------------------


def _load_trained_model(cfg: PipelineConfig, paths: RunPaths) -> TrainedModel:
    manifest_path = _require(paths.train_manifest, "sentihop train")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    best_epoch = manifest["best_epoch"]
    checkpoint = paths.train_dir / f"epoch_{best_epoch}"
    _require(checkpoint, "sentihop train")
    backend = load_backend(checkpoint)
    config = TrainConfig(
        weights=LossWeights(**manifest["config"]["weights"]),
        **{
            k: v
            for k, v in manifest["config"].items()
            if k != "weights"
        },
    )
    return TrainedModel(backend=backend, config=config)


def cmd_eval(args) -> int:
    cfg, paths = _load_config(args)
    dataset = corpus.load_canonical(
        _require(paths.dataset, "sentihop ingest"), name=cfg.get("data", "name", "custom")
    )
    model = _load_trained_model(cfg, paths)
    rationales = None
    if paths.rationales.exists():
        rationales = list(rationale.load_store(paths.rationales).values())
    report = evaluation.evaluate(model, dataset, rationales=rationales)

    report_path = evaluation.write_report_json(report, paths.report_json)
    _validate_report(report_path)
    results_path = evaluation.write_results_csv(report, paths.results_csv, only_slice=args.slice)
    errors_path = evaluation.write_errors_csv(report, paths.errors_csv)

    for name in evaluation.SLICE_NAMES:
        if args.slice is not None and name != args.slice:
            continue
        s = report.slices[name]
        if s.n == 0:
            print(f"  {name}: n=0 (metrics absent)")
        else:
            print(f"  {name}: n={s.n} accuracy={s.accuracy:.4f} macro_f1={s.macro_f1:.4f}")
    fb = report.fallback
    print(f"  fallback: {fb['count']}/{fb['total']} unmappable generations")
    for path in (report_path, results_path, errors_path):
        print(f"wrote {path}")
    return 0


def _validate_report(report_path: Path) -> None:
    import jsonschema

    schema = json.loads(
        (Path(__file__).parent / "report_schema.json").read_text(encoding="utf-8")
    )
    jsonschema.validate(json.loads(report_path.read_text(encoding="utf-8")), schema)


def cmd_report(args) -> int:
    cfg, paths = _load_config(args)
    report_path = _require(paths.report_json, "sentihop eval")
    report_obj = evaluation.load_report_json(report_path)
    out_dir = paths.report_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    produced = []
    for src in (paths.results_csv, paths.errors_csv):
        if src.exists():
            dst = out_dir / src.name
            shutil.copyfile(src, dst)
            produced.append(dst)
    trainlog = paths.trainlog if paths.trainlog.exists() else None
    produced.extend(figures.render_report_figures(report_obj, out_dir, trainlog_csv=trainlog))

    summary = out_dir / "summary.txt"
    lines = [f"dataset: {report_obj['dataset']}"]
    for name, s in report_obj["slices"].items():
        if s["n"] == 0:
            lines.append(f"{name}: n=0 (metrics absent)")
        else:
            lines.append(
                f"{name}: n={s['n']} accuracy={s['accuracy']:.4f} macro_f1={s['macro_f1']:.4f}"
            )
    lines.append(f"total errors: {report_obj['error_breakdown']['total_errors']}")
    amb = report_obj["ambiguity"]
    lines.append(
        f"rationales: {amb['wrong_count']} wrong, {amb['ambiguous_count']} ambiguous "
        f"of {amb['total']}"
    )
    fb = report_obj["fallback"]
    lines.append(f"fallback generations: {fb['count']}/{fb['total']}")
    summary.write_text("\n".join(lines) + "\n", encoding="utf-8")
    produced.append(summary)

    for path in produced:
        print(f"wrote {path}")
    return 0


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sentihop",
        description="Three-hop rationale pipeline: generate, verify, fine-tune, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML pipeline configuration")
    common.add_argument("--run-id", default=None, help="override the config-hash run id")
    common.add_argument("--seed", type=int, default=None, help="override the stage seed")

    p_ingest = sub.add_parser("ingest", parents=[common], help="build the canonical dataset")
    p_ingest.add_argument(
        "--validate-only", action="store_true", help="validate inputs, write nothing"
    )
    p_ingest.set_defaults(func=cmd_ingest)

    p_generate = sub.add_parser(
        "generate", parents=[common], help="generate and verify rationales"
    )
    p_generate.set_defaults(func=cmd_generate)

    p_build = sub.add_parser("build", parents=[common], help="assemble the multi-task set")
    p_build.set_defaults(func=cmd_build)

    p_train = sub.add_parser("train", parents=[common], help="fine-tune the seq2seq backend")
    p_train.set_defaults(func=cmd_train)

    p_search = sub.add_parser(
        "search", parents=[common], help="grid-search loss weights on validation"
    )
    p_search.set_defaults(func=cmd_search)

    p_eval = sub.add_parser("eval", parents=[common], help="evaluate on the test split")
    p_eval.add_argument("--slice", choices=["all", "isa"], default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_report = sub.add_parser(
        "report", parents=[common], help="render figures and summary for a finished run"
    )
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (
        MissingArtifactError,
        FileNotFoundError,
        ConfigError,
        corpus.CorpusError,
        taskset.AssemblyError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
