"""Dense and recurrent (GRU, LSTM) layers built on the tensor tape."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..exceptions import ShapeError
from . import tensor as T
from .tensor import Tensor

ACTIVATIONS = {
    "identity": T.identity,
    "sigmoid": T.sigmoid,
    "tanh": T.tanh,
    "relu": T.relu,
}


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def _param(values) -> Tensor:
    return Tensor(values, requires_grad=True)


class Module:
    """Anything holding named parameters in a fixed, documented order."""

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        raise NotImplementedError

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.named_parameters():
            if name not in state:
                raise KeyError(f"missing parameter {name!r}")
            values = np.asarray(state[name], dtype=np.float64)
            if values.shape != p.shape:
                raise ShapeError(
                    f"parameter {name!r}: expected shape {p.shape}, got {values.shape}"
                )
            p.data = values.copy()


class Dense(Module):
    """Fully connected layer ``activation(x @ W.T + b)``; ``W`` has shape [out, in]."""

    def __init__(self, in_width: int, out_width: int, activation: str = "identity",
                 rng: np.random.Generator | None = None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng()
        self.in_width = in_width
        self.out_width = out_width
        self.activation = activation
        self.weight = _param(glorot_uniform(rng, out_width, in_width))
        self.bias = _param(np.zeros(out_width))

    def named_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def __call__(self, x) -> Tensor:
        return dense_forward(self, x)


def dense_forward(layer: Dense, x) -> Tensor:
    x = T.as_tensor(x)
    squeeze = x.ndim == 1
    if squeeze:
        x = x.reshape(1, -1)
    if x.shape[-1] != layer.in_width:
        raise ShapeError(
            f"dense layer expects input width {layer.in_width}, got {x.shape[-1]}"
        )
    out = ACTIVATIONS[layer.activation](T.linear(x, layer.weight, layer.bias))
    return out.reshape(layer.out_width) if squeeze else out


class _GateBlock:
    __slots__ = ("W", "U", "b")

    def __init__(self, rng, input_width, hidden_width, bias=0.0):
        self.W = _param(glorot_uniform(rng, hidden_width, input_width))
        self.U = _param(glorot_uniform(rng, hidden_width, hidden_width))
        self.b = _param(np.full(hidden_width, bias))

    def preactivation(self, x: Tensor, h: Tensor) -> Tensor:
        return T.add(T.linear(x, self.W, self.b), T.linear(h, self.U))


class RecurrentCell(Module):
    """Shared machinery of the GRU and LSTM cells."""

    kind: str = ""
    gate_names: tuple[str, ...] = ()

    def __init__(self, input_width: int, hidden_width: int,
                 rng: np.random.Generator | None = None):
        if input_width < 1 or hidden_width < 1:
            raise ValueError("cell widths must be positive")
        rng = rng if rng is not None else np.random.default_rng()
        self.input_width = input_width
        self.hidden_width = hidden_width
        self.gates = {
            name: _GateBlock(rng, input_width, hidden_width, self._gate_bias(name))
            for name in self.gate_names
        }

    def _gate_bias(self, name: str) -> float:
        return 0.0

    def named_parameters(self):
        out = []
        for name in self.gate_names:
            g = self.gates[name]
            out += [(f"{name}.W", g.W), (f"{name}.U", g.U), (f"{name}.b", g.b)]
        return out

    def initial_state(self, batch: int):
        raise NotImplementedError

    def step(self, x: Tensor, state):
        """Advance one time step; returns the new recurrent state."""
        raise NotImplementedError

    @staticmethod
    def hidden(state) -> Tensor:
        return state

    def __call__(self, sequence, h0=None, return_sequence: bool = False):
        return rnn_forward(self, sequence, h0, return_sequence=return_sequence)


class GRUCell(RecurrentCell):
    """h_t = (1 - z) * h_{t-1} + z * tanh(W_n x + U_n (r * h_{t-1}) + b_n)."""

    kind = "GRU"
    gate_names = ("update", "reset", "candidate")

    def initial_state(self, batch):
        return Tensor(np.zeros((batch, self.hidden_width)))

    def step(self, x, h):
        z = T.sigmoid(self.gates["update"].preactivation(x, h))
        r = T.sigmoid(self.gates["reset"].preactivation(x, h))
        cand = self.gates["candidate"]
        n = T.tanh(T.add(T.linear(x, cand.W, cand.b), T.linear(T.mul(r, h), cand.U)))
        return T.add(h, T.mul(z, T.sub(n, h)))


class LSTMCell(RecurrentCell):
    kind = "LSTM"
    gate_names = ("input", "forget", "cell", "output")

    def _gate_bias(self, name):
        return 1.0 if name == "forget" else 0.0

    def initial_state(self, batch):
        zeros = np.zeros((batch, self.hidden_width))
        return (Tensor(zeros), Tensor(zeros.copy()))

    def step(self, x, state):
        h, c = state
        blocks = [self.gates[name] for name in self.gate_names]
        hc = T.lstm_step(x, h, c, [q.W for q in blocks], [q.U for q in blocks],
                         [q.b for q in blocks])
        width = self.hidden_width
        return (T.getitem(hc, (slice(None), slice(0, width))),
                T.getitem(hc, (slice(None), slice(width, None))))

    @staticmethod
    def hidden(state):
        return state[0]


CELLS = {"GRU": GRUCell, "LSTM": LSTMCell}


def make_cell(kind: str, input_width: int, hidden_width: int,
              rng: np.random.Generator | None = None) -> RecurrentCell:
    try:
        cls = CELLS[kind.upper()]
    except KeyError:
        raise ValueError(f"unknown cell type {kind!r}; expected GRU or LSTM") from None
    return cls(input_width, hidden_width, rng)


def rnn_forward(cell: RecurrentCell, sequence, h0=None, return_sequence: bool = False):
    """Run ``cell`` over ``sequence`` and return the final hidden state.

    ``sequence`` is [T, in] (single sequence) or [B, T, in] (batch).  ``h0`` is an
    optional initial hidden state; for LSTM it may also be an ``(h, c)`` pair,
    otherwise the cell state starts at zero.  With ``return_sequence`` the list of
    all T hidden states is returned instead.
    """
    seq = T.as_tensor(sequence)
    single = seq.ndim == 2
    if single:
        seq = seq.reshape(1, *seq.shape)
    if seq.ndim != 3:
        raise ShapeError(f"sequence must be [T, in] or [B, T, in], got {seq.shape}")
    batch, steps, width = seq.shape
    if steps < 1:
        raise ShapeError("recurrent layer needs a sequence of at least one step")
    if width != cell.input_width:
        raise ShapeError(
            f"sequence step width {width} does not match cell input width {cell.input_width}"
        )

    state = cell.initial_state(batch)
    if h0 is not None:
        state = _coerce_state(cell, h0, batch, single, state)

    hs = []
    for t in range(steps):
        state = cell.step(seq[:, t, :], state)
        if return_sequence:
            hs.append(cell.hidden(state))
    if return_sequence:
        return [h.reshape(cell.hidden_width) for h in hs] if single else hs
    h = cell.hidden(state)
    return h.reshape(cell.hidden_width) if single else h


def _coerce_state(cell, h0, batch, single, default):
    parts = h0 if isinstance(h0, (tuple, list)) else (h0,)
    out = []
    for p in parts:
        p = T.as_tensor(p)
        if single and p.ndim == 1:
            p = p.reshape(1, -1)
        if p.shape != (batch, cell.hidden_width):
            raise ShapeError(
                f"initial state must have length {cell.hidden_width}, got shape {p.shape}"
            )
        out.append(p)
    if isinstance(cell, LSTMCell):
        return (out[0], out[1] if len(out) > 1 else default[1])
    return out[0]


def parameter_count(modules: Sequence[Module]) -> int:
    return sum(p.size for m in modules for p in m.parameters())
