"""Build the synthetic collection if needed, run every stage, print the summary tables.

    python scripts/run_pipeline.py --config configs/synthetic.toml
"""

import argparse
import sys
from pathlib import Path

from qvpool import cli
from qvpool.config import load_config
from qvpool.corpusio import read_csv
from qvpool.synthetic import make_fixture


def _show(path, columns):
    rows = read_csv(path)
    print(f"\n{path.name}")
    print("  ".join(f"{c:>14}" for c in columns))
    for row in rows:
        print("  ".join(f"{row[c]:>14}" for c in columns))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(Path(__file__).parent.parent / "configs" / "synthetic.toml"))
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    cfg = load_config(args.config)
    if not Path(cfg.corpus).exists():
        make_fixture(Path(cfg.corpus).parent, seed=cfg.seed)
    code = cli.main(["all", "--config", args.config, "--jobs", str(args.jobs)])
    if code:
        sys.exit(code)

    reports = cfg.work / "reports"
    _show(reports / "variant_stats.csv", ["set", "total", "unique", "avg_per_topic", "avg_words_per_query"])
    sim = [r for r in read_csv(reports / "query_similarity.csv") if r["topic_id"] == "ALL"]
    print("\nquery_similarity.csv (means over topics)")
    for r in sim:
        print(f"{r['set_label']:>10} {r['level']:>3} jaccard={r['jaccard']} coverage={r['coverage']}")
    _show(reports / "summary.csv", ["set", "aggregation", "p_at_10", "ndcg_at_10", "rbp_base", "rbp_residual", "rbo"])
    _show(reports / "significance.csv", ["metric", "comparison", "t", "p_adjusted", "significance"])


if __name__ == "__main__":
    main()
