"""Write the synthetic desk-scale collection (corpus, backstories, human variants, qrels)."""

import argparse

from qvpool.synthetic import make_fixture


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("outdir")
    ap.add_argument("--seed", type=int, default=13)
    ap.add_argument("--docs", type=int, default=1000)
    ap.add_argument("--topics", type=int, default=10)
    args = ap.parse_args()
    paths = make_fixture(args.outdir, seed=args.seed, n_docs=args.docs, n_topics=args.topics)
    for name in ("corpus", "backstories", "human", "qrels"):
        print(f"{name}: {getattr(paths, name)}")
    print(f"example topic: {paths.example_topic}")


if __name__ == "__main__":
    main()
