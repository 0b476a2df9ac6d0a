"""Method dispatch and the shared fit / encode / evaluate path.

Single-domain baselines (lsh, pca, itq) are fit on source and target
training data together; ``noda`` sees target training data only; the GTH
variants see both domains separately. Every method is evaluated on target
queries against the target training set.
"""
from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np

from . import baselines
from .baselines import BaselineModel
from .core import GthModel, TrainConfig, encode, train
from .data import Dataset
from .retrieval import RetrievalReport, evaluate, pack

log = logging.getLogger(__name__)

METHODS = ("gth-g", "gth-h", "lsh", "pca", "itq", "noda")
GTH_METHODS = ("gth-g", "gth-h")


def fit(method: str, target: Dataset, source: Dataset | None, cfg: TrainConfig,
        noda_method: str = "itq", itq_iters: int = 50):
    """Train ``method`` with ``cfg.bits`` bits and ``cfg.seed``."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "noda":
        if source is not None:
            log.info("method=noda trains on target data only; ignoring source")
        return baselines.noda_train(target.features, cfg.bits, method=noda_method,
                                    iters=itq_iters, seed=cfg.seed, normalize=cfg.normalize)
    if source is None:
        raise ValueError(f"method {method} needs source data")
    if method in GTH_METHODS:
        return train(target.features, source.features, replace(cfg, variant=method[-1]))
    if method == "lsh":
        return baselines.lsh_train(target.d, cfg.bits, cfg.seed)
    joint = np.hstack([source.features, target.features])
    if method == "pca":
        return baselines.pca_hash_train(joint, cfg.bits, normalize=cfg.normalize)
    return baselines.itq_train(joint, cfg.bits, iters=itq_iters, seed=cfg.seed,
                               normalize=cfg.normalize)


def codes(model, x: np.ndarray, domain: str = "target") -> np.ndarray:
    if isinstance(model, GthModel):
        return encode(model, x, domain)
    if isinstance(model, BaselineModel):
        return model.encode(x)
    raise TypeError(f"not a hashing model: {type(model).__name__}")


def evaluate_model(model, query: Dataset, db: Dataset, ks=(10, 50, 100),
                   domain: str = "target") -> RetrievalReport:
    if query.labels is None or db.labels is None:
        raise ValueError("evaluation needs labelled query and database sets")
    return evaluate(pack(codes(model, query.features, domain)), query.labels,
                    pack(codes(model, db.features, domain)), db.labels, ks)
