"""Compare generated query variants with a human reference set: query-set
similarity, BM25 runs, variant-pool overlap and growth, effectiveness and
consistency metrics with significance tests."""

__version__ = "0.1.0"
