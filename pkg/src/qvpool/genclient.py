"""One-shot prompting of a text-completion backend to generate query variants."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import string
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Protocol, Sequence

from .corpusio import TopicBackstory, VariantSet

log = logging.getLogger(__name__)

DEFAULT_TEMPERATURES = (0.0, 0.5, 1.0)

DEFAULT_TASK_DESCRIPTION = (
    "You are helping to build a web search test collection. Given a backstory "
    "describing an information need, write the keyword queries that different "
    "people would type into a search engine to find information for it. Write "
    "about $num_variants queries, one per line, averaging about $avg_words words "
    "each. Queries may be short, may contain typos, and need not be questions."
)

DEFAULT_TEMPLATE = (
    "$task_description\n"
    "\n"
    "Backstory: $example_backstory\n"
    "Queries:\n"
    "$example_variants\n"
    "\n"
    "Backstory: $target_backstory\n"
    "Queries:\n"
)

_ENUM_MARKER = re.compile(r"^\s*(?:\d+[.)]|[-*•])\s*")


class EmptyResponse(ValueError):
    pass


class BackendError(RuntimeError):
    pass


class RateLimited(BackendError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    """Three-part one-shot prompt: task description, worked example, target.

    ``layout`` is a :class:`string.Template` with the placeholders
    ``$task_description``, ``$example_backstory``, ``$example_variants`` and
    ``$target_backstory``; the task description may use ``$num_variants``
    and ``$avg_words``.
    """

    task_description: str
    example_backstory: TopicBackstory
    example_variants: tuple[str, ...]
    num_variants: int = 57
    avg_words: float = 5.3
    layout: str = DEFAULT_TEMPLATE

    @property
    def example_topic(self) -> str:
        return self.example_backstory.topic_id

    def digest(self) -> str:
        payload = json.dumps(
            [self.task_description, asdict(self.example_backstory), list(self.example_variants),
             self.num_variants, self.avg_words, self.layout],
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class GenerationConfig:
    temperatures: tuple[float, ...] = DEFAULT_TEMPERATURES
    max_output_tokens: int = 1024
    model_name: str = "text-davinci-003"
    retries: int = 3
    request_timeout: float = 60.0
    max_concurrent_requests: int = 4
    backoff_base: float = 1.0


@dataclass(frozen=True)
class GenerationRecord:
    topic_id: str
    temperature: float
    raw_response: str
    parsed_variants: tuple[str, ...]
    timestamp: str
    backend: str
    ok: bool = True
    error: str = ""
    attempts: int = 1

    def to_json(self) -> str:
        d = asdict(self)
        d["parsed_variants"] = list(self.parsed_variants)
        return json.dumps(d, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "GenerationRecord":
        d = json.loads(line)
        d["parsed_variants"] = tuple(d.get("parsed_variants", ()))
        return cls(**d)


class Backend(Protocol):
    name: str

    def complete(self, prompt: str, temperature: float, max_tokens: int) -> str: ...


def build_prompt(template: PromptTemplate, target: TopicBackstory) -> str:
    if target.topic_id == template.example_topic:
        raise ValueError(
            f"target topic {target.topic_id} is the one-shot example topic; it must be excluded"
        )
    task = string.Template(template.task_description).substitute(
        num_variants=template.num_variants, avg_words=f"{template.avg_words:g}"
    )
    return string.Template(template.layout).substitute(
        task_description=task,
        example_backstory=template.example_backstory.text,
        example_variants="\n".join(template.example_variants),
        target_backstory=target.text,
    )


def load_template(
    path: str | os.PathLike | None,
    example: TopicBackstory,
    example_variants: Sequence[str],
    **kw,
) -> PromptTemplate:
    """Template whose task description is read from ``path`` (default text if None)."""
    task = DEFAULT_TASK_DESCRIPTION
    if path is not None:
        task = Path(path).read_text(encoding="utf-8").strip()
    return PromptTemplate(task, example, tuple(example_variants), **kw)


def parse_response(raw: str) -> list[str]:
    """Split a completion into queries, stripping list markers. Keeps duplicates."""
    out = []
    for line in raw.splitlines():
        q = _ENUM_MARKER.sub("", line, count=1).strip()
        if q:
            out.append(q)
    if not out:
        raise EmptyResponse("empty response")
    return out


class HttpCompletionBackend:
    """JSON completion endpoint: POST {model, prompt, temperature, max_tokens}.

    The generated text is read from ``choices[0].text`` by default; set
    ``text_path`` to another dotted path for other services. The API key is
    read from the environment on every request and never stored.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        path: str = "/v1/completions",
        api_key_env: str = "OPENAI_API_KEY",
        text_path: str = "choices.0.text",
        timeout: float = 60.0,
    ):
        self.url = base_url.rstrip("/") + path
        self.model = model
        self.api_key_env = api_key_env
        self.text_path = text_path.split(".")
        self.timeout = timeout
        self.name = f"http:{model}"

    def complete(self, prompt: str, temperature: float, max_tokens: int) -> str:
        body = json.dumps(
            {"model": self.model, "prompt": prompt, "temperature": temperature, "max_tokens": max_tokens}
        ).encode("utf-8")
        req = urllib.request.Request(self.url, data=body, method="POST")
        req.add_header("Content-Type", "application/json")
        key = os.environ.get(self.api_key_env)
        if key:
            req.add_header("Authorization", f"Bearer {key}")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as e:
            if e.code == 429:
                raise RateLimited(f"HTTP 429 from {self.url}") from None
            raise BackendError(f"HTTP {e.code} from {self.url}") from None
        except (urllib.error.URLError, TimeoutError, json.JSONDecodeError) as e:
            raise BackendError(f"request to {self.url} failed: {e}") from None
        node = payload
        try:
            for part in self.text_path:
                node = node[int(part)] if isinstance(node, list) else node[part]
        except (KeyError, IndexError, ValueError, TypeError):
            raise BackendError(f"response has no {'.'.join(self.text_path)} field") from None
        return str(node)


_MOCK_STOP = frozenset(
    "a an and are as at be but by for if in into is it no not of on or such that the their "
    "then there these they this to was will with you your i my me we our want need would "
    "like know some about what how which who learn relates particularly interested "
    "find information".split()
)


class MockBackend:
    """Seeded offline backend that writes keyword queries from the target backstory.

    The target backstory is the text after the last ``marker`` in the prompt.
    Higher temperatures draw fewer exact repeats and more varied lengths.
    Output depends only on (seed, prompt, temperature).
    """

    def __init__(self, seed: int = 0, num_variants: int = 30, avg_words: float = 4.0,
                 marker: str = "Backstory:"):
        self.seed = seed
        self.num_variants = num_variants
        self.avg_words = avg_words
        self.marker = marker
        self.name = f"mock:{seed}"

    def complete(self, prompt: str, temperature: float, max_tokens: int) -> str:
        target = prompt.rsplit(self.marker, 1)[-1]
        target = target.split("Queries:", 1)[0]
        words = [w for w in re.findall(r"[a-z0-9']+", target.lower()) if w not in _MOCK_STOP]
        if not words:
            return ""
        key = f"{self.seed}|{temperature!r}|{prompt}".encode("utf-8")
        rng = random.Random(hashlib.sha256(key).hexdigest())
        n = max(1, int(round(rng.gauss(self.num_variants, self.num_variants * 0.2))))
        spread = 0.5 + temperature
        lines = []
        for i in range(n):
            length = max(1, min(len(words), int(round(rng.gauss(self.avg_words, spread)))))
            if temperature < 0.25 and lines and rng.random() < 0.3:
                lines.append(lines[rng.randrange(len(lines))])
                continue
            picked = sorted(rng.sample(range(len(words)), length))
            chunk = [words[j] for j in picked]
            if rng.random() < temperature * 0.5:
                rng.shuffle(chunk)
            lines.append(" ".join(chunk))
        return "\n".join(f"{i + 1}. {q}" for i, q in enumerate(lines))


class FailingBackend:
    """Backend that always fails or returns a fixed text; for tests and dry runs."""

    def __init__(self, text: str | None = None, name: str = "failing"):
        self.text = text
        self.name = name
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, prompt: str, temperature: float, max_tokens: int) -> str:
        with self._lock:
            self.calls += 1
        if self.text is None:
            raise BackendError("backend unavailable")
        return self.text


def load_records(path: str | os.PathLike) -> list[GenerationRecord]:
    p = Path(path)
    if not p.exists():
        return []
    records = []
    with p.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                records.append(GenerationRecord.from_json(line))
            except (json.JSONDecodeError, TypeError):
                # a batch interrupted mid-write leaves one truncated line
                log.warning("skipping unreadable record line in %s", path)
    return records


def _now() -> str:
    # SOURCE_DATE_EPOCH pins timestamps for reproducible builds
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.isoformat(timespec="seconds")


def _generate_one(
    backstory: TopicBackstory,
    temperature: float,
    prompt: str,
    config: GenerationConfig,
    backend: Backend,
    sleep=time.sleep,
) -> GenerationRecord:
    last_error = ""
    raw = ""
    attempts = 0
    for attempt in range(config.retries + 1):
        attempts = attempt + 1
        try:
            raw = backend.complete(prompt, temperature, config.max_output_tokens)
        except RateLimited as e:
            last_error = str(e)
            sleep(config.backoff_base * 2**attempt)
            continue
        except BackendError as e:
            last_error = str(e)
            continue
        try:
            variants = parse_response(raw)
        except EmptyResponse as e:
            last_error = str(e)
            continue
        return GenerationRecord(
            backstory.topic_id, temperature, raw, tuple(variants), _now(), backend.name,
            attempts=attempts,
        )
    return GenerationRecord(
        backstory.topic_id, temperature, raw, (), _now(), backend.name,
        ok=False, error=last_error, attempts=attempts,
    )


def generate_variants(
    backstories: Sequence[TopicBackstory],
    template: PromptTemplate,
    config: GenerationConfig,
    backend: Backend,
    records_path: str | os.PathLike | None = None,
    *,
    sleep=time.sleep,
) -> list[GenerationRecord]:
    """One record per (backstory, temperature), in (temperature, topic) order.

    Records are appended to ``records_path`` as they complete; pairs already
    present there are not requested again.
    """
    for b in backstories:
        if b.topic_id == template.example_topic:
            raise ValueError(f"example topic {b.topic_id} must be excluded from generation")
    existing = {}
    if records_path is not None:
        for r in load_records(records_path):
            existing[(r.topic_id, r.temperature)] = r
    todo = [
        (b, t)
        for t in config.temperatures
        for b in backstories
        if (b.topic_id, t) not in existing
    ]
    if existing:
        log.info("resuming: %d of %d requests already recorded", len(existing), len(todo) + len(existing))

    lock = threading.Lock()
    out_fh = open(records_path, "a", encoding="utf-8") if records_path is not None else None

    def task(item):
        b, t = item
        rec = _generate_one(b, t, build_prompt(template, b), config, backend, sleep)
        if out_fh is not None:
            with lock:
                out_fh.write(rec.to_json() + "\n")
                out_fh.flush()
        return rec

    try:
        with ThreadPoolExecutor(max_workers=max(1, config.max_concurrent_requests)) as pool:
            new = list(pool.map(task, todo))
    finally:
        if out_fh is not None:
            out_fh.close()

    for r in new:
        existing[(r.topic_id, r.temperature)] = r
    records = [existing[(b.topic_id, t)] for t in config.temperatures for b in backstories]
    if records and not any(r.ok for r in records):
        raise BackendError("every generation request failed")
    return records


def temperature_label(temperature: float) -> str:
    return f"gpt-t{temperature:g}" if temperature != int(temperature) else f"gpt-t{temperature:.1f}"


def records_to_variant_set(
    records: Sequence[GenerationRecord], temperature: float
) -> tuple[VariantSet, list[str]]:
    """Variant set for one temperature plus the topics dropped for failures."""
    matching = [r for r in records if r.temperature == temperature]
    ok = [r for r in matching if r.ok]
    if not ok:
        raise ValueError(f"no successful generation records at temperature {temperature}")
    failed = sorted({r.topic_id for r in matching if not r.ok} - {r.topic_id for r in ok})
    if failed:
        log.warning("temperature %s: omitting %d failed topic(s): %s", temperature, len(failed), failed)
    entries = {r.topic_id: list(r.parsed_variants) for r in sorted(ok, key=lambda r: r.topic_id)}
    return VariantSet(temperature_label(temperature), entries), failed
