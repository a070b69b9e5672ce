"""Tree-structured GLMs with categorical level fusion.

Thin Python surface over the C++ core: ingest a dataset against a JSON
schema, fit a tree-structured model under a chosen stopping rule, run
bootstrap stability analysis, or reproduce the synthetic stopping-rule study.
"""

try:
    from ._treefuse import (
        ClusterSet,
        DataError,
        Dataset,
        FitError,
        Model,
        bootstrap,
        config_hash,
        derive_seed,
        fit,
        ingest,
        simulate,
    )
except ImportError:  # build tree: extension sits on sys.path, not in-package
    from _treefuse import (
        ClusterSet,
        DataError,
        Dataset,
        FitError,
        Model,
        bootstrap,
        config_hash,
        derive_seed,
        fit,
        ingest,
        simulate,
    )

__all__ = [
    "ClusterSet",
    "DataError",
    "Dataset",
    "FitError",
    "Model",
    "bootstrap",
    "config_hash",
    "derive_seed",
    "fit",
    "ingest",
    "simulate",
]
