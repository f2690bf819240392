"""Experiment configuration: one TOML file, overridable from the command line."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .textnorm import ALL_LEVELS


@dataclass
class ExperimentConfig:
    # inputs
    corpus: str = ""
    backstories: str = ""
    human_variants: str = ""
    qrels: str = ""
    prompt_template: str = ""
    workdir: str = "work"

    seed: int = 0
    jobs: int = 1

    # topics
    example_topic: str = "275"
    excluded_topics: list[str] | None = None
    baseline_label: str = "human"

    # generation
    temperatures: list[float] = field(default_factory=lambda: [0.0, 0.5, 1.0])
    backend: str = "mock"
    backend_url: str = "https://api.openai.com"
    backend_path: str = "/v1/completions"
    api_key_env: str = "OPENAI_API_KEY"
    model_name: str = "text-davinci-003"
    retries: int = 3
    request_timeout: float = 60.0
    max_output_tokens: int = 1024
    prompt_num_variants: int = 57
    prompt_avg_words: float = 5.3
    mock_num_variants: int = 30
    mock_avg_words: float = 4.0

    # retrieval
    k1: float = 0.9
    b: float = 0.4
    run_depth: int = 1000

    # query similarity
    levels: list[str] = field(default_factory=lambda: [lv.name for lv in ALL_LEVELS])
    t0_case_sensitive: bool = False

    # pooling
    depths: list[int] = field(default_factory=lambda: list(range(10, 101, 10)))
    growth_depth: int = 10
    growth_orderings: int = 50
    growth_cutoff: int | None = None
    growth_ordering: str = "random"  # or "file": variant order as listed

    # metrics
    metric_depth: int = 10
    rbp_p: float = 0.9
    rbo_p: float = 0.9
    rbo_depth: int = 1000
    max_grade: int = 4
    ndcg_gain: str = "linear"  # or "exponential"
    strict_qrels: bool = False

    @property
    def excluded(self) -> list[str]:
        if self.excluded_topics is None:
            return [self.example_topic]
        return [str(t) for t in self.excluded_topics]

    @property
    def work(self) -> Path:
        return Path(self.workdir)

    def digest(self) -> str:
        """Hash of every setting that can change outputs (not workdir or jobs)."""
        d = dataclasses.asdict(self)
        d.pop("workdir")
        d.pop("jobs")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode("utf-8")).hexdigest()[:16]

    def header_comment(self) -> str:
        return f"seed={self.seed} config={self.digest()}"


_FIELD_TYPES = {f.name: f for f in fields(ExperimentConfig)}


def _coerce(name: str, value: Any) -> Any:
    if name not in _FIELD_TYPES:
        raise KeyError(f"unknown config key {name!r}")
    default = _FIELD_TYPES[name].default
    if default is dataclasses.MISSING:
        default = _FIELD_TYPES[name].default_factory()
    if not isinstance(value, str):
        return value
    if isinstance(default, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, list) or name in ("excluded_topics",):
        items = [v.strip() for v in value.split(",") if v.strip()]
        if name == "temperatures":
            return [float(v) for v in items]
        if name == "depths":
            return [int(v) for v in items]
        return items
    if name == "growth_cutoff":
        return None if value.lower() in ("", "none") else int(value)
    return value


def _flatten(d: dict, out: dict | None = None) -> dict:
    out = {} if out is None else out
    for k, v in d.items():
        if isinstance(v, dict):
            _flatten(v, out)
        else:
            out[k] = v
    return out


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Read a TOML config (tables are flattened) and apply ``overrides``.

    Relative input paths in the file resolve against the file's directory.
    """
    values: dict[str, Any] = {}
    if path is not None:
        with open(path, "rb") as fh:
            values = _flatten(tomllib.load(fh))
        base = Path(path).resolve().parent
        for key in ("corpus", "backstories", "human_variants", "qrels", "prompt_template", "workdir"):
            if values.get(key) and not Path(values[key]).is_absolute():
                values[key] = str(base / values[key])
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    cfg = ExperimentConfig(**{k: _coerce(k, v) for k, v in values.items()})
    if cfg.excluded_topics is not None:
        cfg.excluded_topics = [str(t) for t in cfg.excluded_topics]
    cfg.example_topic = str(cfg.example_topic)
    return cfg


def dump_config(cfg: ExperimentConfig) -> str:
    """Render ``cfg`` as TOML (flat keys)."""
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        lines.append(f"{f.name} = {json.dumps(v)}")
    return "\n".join(lines) + "\n"
