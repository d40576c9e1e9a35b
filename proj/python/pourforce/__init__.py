"""Stacked-LSTM sequence regression for pouring-force estimation."""

from ._core import (
    Dataset,
    Model,
    grad_check,
    load_corpus,
    masked_mse,
    mse,
    synth_corpus,
    train,
)

__all__ = [
    "Dataset",
    "Model",
    "grad_check",
    "load_corpus",
    "masked_mse",
    "mse",
    "synth_corpus",
    "train",
]
