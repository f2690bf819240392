"""Command-line pipeline: index, generate, run, compare-queries, compare-pools, metrics.

Every command reads the experiment config, writes into the work directory
and records a manifest (config hash, seed, input hashes) under
``<workdir>/manifest/``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import corpusio, engine, evalmetrics, genclient, pooling, stats, textnorm
from .config import ExperimentConfig, load_config
from .corpusio import RankedRun, VariantSet, write_csv

log = logging.getLogger("qvpool")


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


# --- workdir layout ---------------------------------------------------------

def index_path(cfg: ExperimentConfig) -> Path:
    return cfg.work / "index.bin"


def variants_dir(cfg: ExperimentConfig) -> Path:
    return cfg.work / "variants"


def runs_dir(cfg: ExperimentConfig) -> Path:
    return cfg.work / "runs"


def reports_dir(cfg: ExperimentConfig) -> Path:
    return cfg.work / "reports"


def records_path(cfg: ExperimentConfig) -> Path:
    return cfg.work / "generation" / "records.jsonl"


# --- helpers ----------------------------------------------------------------

def _require(cfg: ExperimentConfig, *names: str) -> None:
    for name in names:
        value = getattr(cfg, name)
        if not value:
            raise CliError(f"missing input {name}: not configured", 2)
        if not Path(value).exists():
            raise CliError(f"missing input {name}: {value}", 2)


def _require_file(path: Path, what: str, hint: str) -> None:
    if not path.exists():
        raise CliError(f"missing input {what}: {path} ({hint})", 2)


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(cfg: ExperimentConfig, command: str, inputs: dict[str, Path | str]) -> None:
    manifest = {
        "command": command,
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "excluded_topics": cfg.excluded,
        "inputs": {k: _sha256(v) for k, v in sorted(inputs.items())},
    }
    corpusio.atomic_write_text(
        cfg.work / "manifest" / f"{command}.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def _csv(cfg: ExperimentConfig, name: str, header: Sequence[str], rows) -> Path:
    path = reports_dir(cfg) / name
    write_csv(path, header, rows, comment=cfg.header_comment())
    return path


def load_human(cfg: ExperimentConfig) -> VariantSet:
    _require(cfg, "human_variants")
    return corpusio.parse_variants(cfg.human_variants, cfg.baseline_label).without(cfg.excluded)


def load_generated(cfg: ExperimentConfig) -> list[VariantSet]:
    out = []
    for t in cfg.temperatures:
        label = genclient.temperature_label(t)
        path = variants_dir(cfg) / f"{label}.tsv"
        _require_file(path, f"variants {label}", "run `qvpool generate` first")
        out.append(corpusio.parse_variants(path, label).without(cfg.excluded))
    return out


def _common_topics(sets: Sequence[VariantSet]) -> list[VariantSet]:
    common = set.intersection(*(set(s.entries) for s in sets))
    trimmed = []
    for s in sets:
        dropped = sorted(set(s.entries) - common)
        if dropped:
            log.warning("%s: dropping topics missing from other sets: %s", s.label, dropped)
        trimmed.append(VariantSet(s.label, {t: s.entries[t] for t in common}))
    return trimmed


def load_runs(cfg: ExperimentConfig) -> dict[str, list[RankedRun]]:
    labels = [cfg.baseline_label] + [genclient.temperature_label(t) for t in cfg.temperatures]
    excluded = set(cfg.excluded)
    out = {}
    for label in labels:
        path = runs_dir(cfg) / f"{label}.run"
        _require_file(path, f"run {label}", "run `qvpool run` first")
        out[label] = [r for r in corpusio.parse_run(path) if r.topic_id not in excluded]
    return out


# --- commands ---------------------------------------------------------------

def cmd_index(cfg: ExperimentConfig) -> Path:
    _require(cfg, "corpus")
    index = engine.build_index(engine.read_corpus(cfg.corpus))
    out = index_path(cfg)
    index.save(out)
    log.info("indexed %d documents, %d terms -> %s", index.num_docs, len(index.postings), out)
    _write_manifest(cfg, "index", {"corpus": cfg.corpus})
    return out


def make_backend(cfg: ExperimentConfig):
    if cfg.backend == "mock":
        return genclient.MockBackend(cfg.seed, cfg.mock_num_variants, cfg.mock_avg_words)
    if cfg.backend == "http":
        return genclient.HttpCompletionBackend(
            cfg.backend_url, cfg.model_name, path=cfg.backend_path,
            api_key_env=cfg.api_key_env, timeout=cfg.request_timeout,
        )
    raise CliError(f"unknown backend {cfg.backend!r}")


def cmd_generate(cfg: ExperimentConfig, backend=None) -> list[VariantSet]:
    _require(cfg, "backstories", "human_variants")
    backstories = corpusio.parse_backstories(cfg.backstories)
    human_all = corpusio.parse_variants(cfg.human_variants, cfg.baseline_label)
    by_id = {b.topic_id: b for b in backstories}
    if cfg.example_topic not in by_id or cfg.example_topic not in human_all.entries:
        raise CliError(f"example topic {cfg.example_topic} needs a backstory and human variants")
    template_path = cfg.prompt_template or None
    template = genclient.load_template(
        template_path,
        by_id[cfg.example_topic],
        human_all.unique_variants(cfg.example_topic),
        num_variants=cfg.prompt_num_variants,
        avg_words=cfg.prompt_avg_words,
    )
    excluded = set(cfg.excluded) | {cfg.example_topic}
    targets = [b for b in backstories if b.topic_id not in excluded]
    gen_cfg = genclient.GenerationConfig(
        temperatures=tuple(cfg.temperatures),
        max_output_tokens=cfg.max_output_tokens,
        model_name=cfg.model_name,
        retries=cfg.retries,
        request_timeout=cfg.request_timeout,
        max_concurrent_requests=max(1, cfg.jobs),
    )
    rpath = records_path(cfg)
    rpath.parent.mkdir(parents=True, exist_ok=True)
    backend = backend or make_backend(cfg)
    records = genclient.generate_variants(targets, template, gen_cfg, backend, rpath)
    # rewrite the append log in canonical order so reruns are byte-stable
    corpusio.atomic_write_text(rpath, "".join(r.to_json() + "\n" for r in records))

    sets, failures = [], {}
    for t in cfg.temperatures:
        vs, failed = genclient.records_to_variant_set(records, t)
        corpusio.write_variants(variants_dir(cfg) / f"{vs.label}.tsv", vs)
        failures[vs.label] = failed
        sets.append(vs)
    corpusio.atomic_write_text(
        cfg.work / "generation" / "failures.json", json.dumps(failures, indent=2, sort_keys=True) + "\n"
    )
    corpusio.atomic_write_text(cfg.work / "generation" / "template.sha256", template.digest() + "\n")

    human = human_all.without(cfg.excluded)
    rows = []
    for vs in [human] + sets:
        st = corpusio.variant_stats(vs)
        rows.append([vs.label, st.total, st.unique, st.min_per_topic, st.max_per_topic,
                     st.avg_per_topic, st.avg_words_per_query])
    _csv(cfg, "variant_stats.csv",
         ["set", "total", "unique", "min_per_topic", "max_per_topic", "avg_per_topic", "avg_words_per_query"],
         rows)
    inputs = {"backstories": cfg.backstories, "human_variants": cfg.human_variants}
    if template_path:
        inputs["prompt_template"] = template_path
    _write_manifest(cfg, "generate", inputs)
    return sets


def cmd_run(cfg: ExperimentConfig) -> dict[str, Path]:
    _require_file(index_path(cfg), "index", "run `qvpool index` first")
    index = engine.InvertedIndex.load(index_path(cfg))
    sets = [load_human(cfg)] + load_generated(cfg)
    params = engine.Bm25Params(cfg.k1, cfg.b)
    runs = engine.batch_run(index, params, sets, cfg.run_depth, jobs=cfg.jobs)
    out = {}
    for label, rs in runs.items():
        path = runs_dir(cfg) / f"{label}.run"
        corpusio.write_run(path, rs, tag=f"bm25-{label}")
        out[label] = path
    _write_manifest(cfg, "run", {"index": index_path(cfg), "human_variants": cfg.human_variants})
    return out


def cmd_compare_queries(cfg: ExperimentConfig) -> Path:
    human = load_human(cfg)
    generated = load_generated(cfg)
    rows = []
    for other in generated:
        h, o = _common_topics([human, other])
        results = textnorm.cascade_compare(h, o, cfg.levels, case_sensitive=cfg.t0_case_sensitive)
        rows.extend(textnorm.similarity_rows(other.label, results))
    path = _csv(cfg, "query_similarity.csv", ["set_label", "level", "topic_id", "jaccard", "coverage"], rows)
    _write_manifest(cfg, "compare-queries", {"human_variants": cfg.human_variants})
    return path


def _align_runs(runs: dict[str, list[RankedRun]]) -> dict[str, list[RankedRun]]:
    common = set.intersection(*({r.topic_id for r in rs} for rs in runs.values()))
    return {label: [r for r in rs if r.topic_id in common] for label, rs in runs.items()}


def cmd_compare_pools(cfg: ExperimentConfig) -> list[Path]:
    _require(cfg, "qrels")
    qrels = corpusio.parse_qrels(cfg.qrels, cfg.max_grade, strict=cfg.strict_qrels)
    runs = _align_runs(load_runs(cfg))
    base = runs[cfg.baseline_label]
    overlap_rows = []
    for label, rs in runs.items():
        if label == cfg.baseline_label:
            continue
        for filt, judgments in (("all", None), ("relevant", qrels)):
            for pt in pooling.pool_overlap(base, rs, cfg.depths, judgments):
                for topic, j in pt.per_topic.items():
                    overlap_rows.append([cfg.baseline_label, label, pt.depth, filt, topic, j])
                overlap_rows.append([cfg.baseline_label, label, pt.depth, filt, "ALL", pt.mean_jaccard])
    p1 = _csv(cfg, "pool_overlap.csv", ["setA", "setB", "depth", "filter", "topic_id", "jaccard"], overlap_rows)

    seed = cfg.seed if cfg.growth_ordering == "random" else None
    growth_rows = []
    for label, rs in runs.items():
        curve = pooling.growth_curve(rs, cfg.growth_depth, cfg.growth_orderings, seed, cfg.growth_cutoff)
        for m, size in curve.points:
            growth_rows.append([label, curve.depth, m, size])
    p2 = _csv(cfg, "pool_growth.csv", ["set", "depth", "num_variants", "mean_pool_size"], growth_rows)

    prop_rows = []
    for label, rs in runs.items():
        props = pooling.pool_properties(pooling.build_pools(rs, cfg.metric_depth), qrels)
        prop_rows.append([label, cfg.metric_depth, props.size, props.frac_relevant, props.frac_unjudged])
    p3 = _csv(cfg, "pool_properties.csv", ["set", "depth", "size", "frac_relevant", "frac_unjudged"], prop_rows)
    _write_manifest(cfg, "compare-pools", {"qrels": cfg.qrels, **_run_inputs(cfg)})
    return [p1, p2, p3]


def _run_inputs(cfg: ExperimentConfig) -> dict[str, Path]:
    labels = [cfg.baseline_label] + [genclient.temperature_label(t) for t in cfg.temperatures]
    return {f"run:{label}": runs_dir(cfg) / f"{label}.run" for label in labels}


def cmd_metrics(cfg: ExperimentConfig) -> list[Path]:
    _require(cfg, "qrels")
    qrels = corpusio.parse_qrels(cfg.qrels, cfg.max_grade, strict=cfg.strict_qrels)
    runs = _align_runs(load_runs(cfg))
    k = cfg.metric_depth
    exp_gain = cfg.ndcg_gain == "exponential"

    metric_rows, rbo_rows, summary_rows, sig_rows = [], [], [], []
    per_topic: dict[str, dict[str, dict[str, float]]] = {}
    rbo_topic: dict[str, dict[str, float]] = {}
    for label, rs in runs.items():
        scores = [evalmetrics.score_run(r, qrels, k, cfg.rbp_p, exponential_gain=exp_gain) for r in rs]
        for s in scores:
            metric_rows.append([label, s.topic_id, s.variant_index, s.p_at_k, s.ndcg_at_k, s.rbp_base, s.rbp_residual])
        per_topic[label] = evalmetrics.per_topic_means(scores)
        rbo_topic[label] = {}
        for topic, trs in sorted(pooling.group_by_topic(rs).items()):
            if len(trs) < 2:
                log.info("%s topic %s has fewer than 2 variants; no RBO", label, topic)
                continue
            score = evalmetrics.topic_rbo(trs, cfg.rbo_p, cfg.rbo_depth)
            rbo_rows.append([label, topic, score.mean_rbo, score.num_pairs])
            rbo_topic[label][topic] = score.mean_rbo
        props = pooling.pool_properties(pooling.build_pools(rs, k), qrels)
        mean_rbo = (sum(rbo_topic[label].values()) / len(rbo_topic[label])) if rbo_topic[label] else float("nan")
        for agg in evalmetrics.aggregate_scores(scores):
            summary_rows.append([label, agg.aggregation, agg.n, agg.p_at_k, agg.ndcg_at_k, agg.rbp_base,
                                 agg.rbp_residual, mean_rbo, props.size, props.frac_relevant, props.frac_unjudged])

    metric_names = {"p_at_k": f"p_at_{k}", "ndcg_at_k": f"ndcg_at_{k}", "rbp_base": "rbp_base",
                    "rbp_residual": "rbp_residual"}
    for field, name in metric_names.items():
        table = {label: {t: m[field] for t, m in pt.items()} for label, pt in per_topic.items()}
        for res in stats.compare_to_baseline(table, cfg.baseline_label, name):
            sig_rows.append(res.row())
    rbo_common = set.intersection(*(set(v) for v in rbo_topic.values())) if rbo_topic else set()
    if rbo_common:
        table = {label: {t: v[t] for t in rbo_common} for label, v in rbo_topic.items()}
        for res in stats.compare_to_baseline(table, cfg.baseline_label, "rbo"):
            sig_rows.append(res.row())

    paths = [
        _csv(cfg, "metrics.csv", ["set", "topic_id", "variant_index", f"p_at_{k}", f"ndcg_at_{k}",
                                  "rbp_base", "rbp_residual"], metric_rows),
        _csv(cfg, "rbo.csv", ["set", "topic_id", "mean_rbo", "num_pairs"], rbo_rows),
        _csv(cfg, "significance.csv", stats.SIGNIFICANCE_HEADER, sig_rows),
        _csv(cfg, "summary.csv", ["set", "aggregation", "n", f"p_at_{k}", f"ndcg_at_{k}", "rbp_base",
                                  "rbp_residual", "rbo", "pool_size", "pool_relevant", "pool_unjudged"],
             summary_rows),
    ]
    _write_manifest(cfg, "metrics", {"qrels": cfg.qrels, **_run_inputs(cfg)})
    return paths


def cmd_all(cfg: ExperimentConfig) -> None:
    cmd_index(cfg)
    cmd_generate(cfg)
    cmd_run(cfg)
    cmd_compare_queries(cfg)
    cmd_compare_pools(cfg)
    cmd_metrics(cfg)


COMMANDS = {
    "index": cmd_index,
    "generate": cmd_generate,
    "run": cmd_run,
    "compare-queries": cmd_compare_queries,
    "compare-pools": cmd_compare_pools,
    "metrics": cmd_metrics,
    "all": cmd_all,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qvpool", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="TOML experiment config")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--workdir")
    parser.add_argument("--jobs", type=int)
    parser.add_argument("--corpus")
    parser.add_argument("--backstories")
    parser.add_argument("--human-variants")
    parser.add_argument("--qrels")
    parser.add_argument("--t0-case-sensitive", action="store_true", default=None)
    parser.add_argument("--ordering", choices=["random", "file"], dest="growth_ordering")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    overrides = {
        "seed": args.seed,
        "workdir": args.workdir,
        "jobs": args.jobs,
        "corpus": args.corpus,
        "backstories": args.backstories,
        "human_variants": args.human_variants,
        "qrels": args.qrels,
        "t0_case_sensitive": args.t0_case_sensitive,
        "growth_ordering": args.growth_ordering,
    }
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            parser.error(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip().replace("-", "_")] = value
    try:
        if args.config and not os.path.exists(args.config):
            raise CliError(f"missing input config: {args.config}", 2)
        cfg = load_config(args.config, overrides)
        COMMANDS[args.command](cfg)
    except CliError as e:
        print(f"qvpool: error: {e}", file=sys.stderr)
        return e.code
    except (OSError, ValueError, KeyError, genclient.BackendError) as e:
        msg = str(e).replace("\n", " ")
        print(f"qvpool: error: {type(e).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
