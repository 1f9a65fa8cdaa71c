"""Minimal float64 network kernel: tensors with a gradient tape, layers, Adam."""
from .layers import (Dense, GRUCell, LSTMCell, Module, RecurrentCell, dense_forward,
                     glorot_uniform, make_cell, rnn_forward)
from .optim import Adam
from .tensor import Tensor, no_grad

__all__ = [
    "Adam",
    "Dense",
    "GRUCell",
    "LSTMCell",
    "Module",
    "RecurrentCell",
    "Tensor",
    "dense_forward",
    "glorot_uniform",
    "make_cell",
    "no_grad",
    "rnn_forward",
]
