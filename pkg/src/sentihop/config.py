"""Pipeline configuration: one TOML document per run, hashed into a default
run id so unchanged configs land in the same run directory."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    raw: dict
    source: Path | None = None

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        with path.open("rb") as fh:
            try:
                raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
        return cls(raw=raw, source=path)

    def section(self, name: str) -> dict:
        value = self.raw.get(name, {})
        if not isinstance(value, dict):
            raise ConfigError(f"config section [{name}] must be a table")
        return value

    def get(self, section: str, key: str, default=None):
        return self.section(section).get(key, default)

    def require(self, section: str, key: str):
        value = self.get(section, key)
        if value is None:
            raise ConfigError(f"config is missing [{section}] {key}")
        return value

    def run_id(self) -> str:
        payload = json.dumps(self.raw, sort_keys=True, ensure_ascii=False, default=str)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]

    def output_dir(self) -> Path:
        return Path(self.get("output", "dir", "runs"))


@dataclass(frozen=True)
class RunPaths:
    """Directory layout of one run: runs/{run_id}/{stage}/..."""

    root: Path

    def stage(self, name: str) -> Path:
        return self.root / name

    @property
    def dataset(self) -> Path:
        return self.stage("ingest") / "dataset.jsonl"

    @property
    def rationales(self) -> Path:
        return self.stage("generate") / "rationales.jsonl"

    @property
    def cache(self) -> Path:
        return self.stage("generate") / "cache.jsonl"

    @property
    def taskset(self) -> Path:
        return self.stage("build") / "taskset.jsonl"

    @property
    def build_manifest(self) -> Path:
        return self.stage("build") / "manifest.json"

    @property
    def train_dir(self) -> Path:
        return self.stage("train")

    @property
    def trainlog(self) -> Path:
        return self.stage("train") / "trainlog.csv"

    @property
    def train_manifest(self) -> Path:
        return self.stage("train") / "manifest.json"

    @property
    def report_json(self) -> Path:
        return self.stage("eval") / "report.json"

    @property
    def results_csv(self) -> Path:
        return self.stage("eval") / "results.csv"

    @property
    def errors_csv(self) -> Path:
        return self.stage("eval") / "errors.csv"

    @property
    def search_csv(self) -> Path:
        return self.stage("search") / "search.csv"

    @property
    def report_dir(self) -> Path:
        return self.stage("report")


def run_paths(config: PipelineConfig, run_id: str | None = None) -> RunPaths:
    rid = run_id or config.run_id()
    return RunPaths(root=config.output_dir() / rid)
