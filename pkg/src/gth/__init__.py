"""Projection-guided transfer hashing with Hamming-space retrieval evaluation."""
from .baselines import BaselineModel, itq_train, lsh_train, noda_train, pca_hash_train
from .core import GthModel, TrainConfig, encode, objective, grad_wt, grad_ws, sign_codes, train
from .data import Dataset, SynthConfig, synth
from .retrieval import PackedCodes, RetrievalReport, evaluate, hamming, pack, rank, unpack

__version__ = "0.1.0"
