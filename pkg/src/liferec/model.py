"""One-layer LSTM with a linear read-out head, losses and accuracies."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .errors import ContractError, ShapeError
from .numcore import Eager, Tape, backward, bce_with_logits, softmax_xent

PARAM_NAMES = ("W_ih", "W_hh", "b", "W_out", "b_out")
TARGET_KINDS = ("bitwise", "digit-class")


@dataclass
class LstmParams:
    """LSTM weights with gate blocks stacked as (input, forget, candidate, output).

    Shapes: ``W_ih`` 4h x d, ``W_hh`` 4h x h, ``b`` 4h x 1, ``W_out`` o x h,
    ``b_out`` o x 1.
    """

    W_ih: np.ndarray
    W_hh: np.ndarray
    b: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray

    def __post_init__(self):
        h = self.hidden
        d, o = self.input_size, self.output_size
        expected = {
            "W_ih": (4 * h, d),
            "W_hh": (4 * h, h),
            "b": (4 * h, 1),
            "W_out": (o, h),
            "b_out": (o, 1),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeError(f"{name}: expected {shape}, got {getattr(self, name).shape}")

    @property
    def hidden(self) -> int:
        return self.W_hh.shape[1]

    @property
    def input_size(self) -> int:
        return self.W_ih.shape[1]

    @property
    def output_size(self) -> int:
        return self.W_out.shape[0]

    @property
    def n_params(self) -> int:
        return sum(getattr(self, k).size for k in PARAM_NAMES)

    def as_dict(self) -> Dict[str, np.ndarray]:
        """Live references, so in-place optimizer updates land on ``self``."""
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def copy(self) -> "LstmParams":
        return LstmParams(**{k: getattr(self, k).copy() for k in PARAM_NAMES})

    def flatten(self) -> np.ndarray:
        return self.flatten_like(self.as_dict())

    @staticmethod
    def flatten_like(arrays: Dict[str, np.ndarray]) -> np.ndarray:
        """Flatten a name -> array mapping in parameter order."""
        return np.concatenate([arrays[k].ravel() for k in PARAM_NAMES])

    def unflatten(self, flat: np.ndarray) -> Dict[str, np.ndarray]:
        """Split a flat vector into arrays shaped like this model's parameters."""
        out, pos = {}, 0
        for k in PARAM_NAMES:
            ref = getattr(self, k)
            out[k] = flat[pos : pos + ref.size].reshape(ref.shape)
            pos += ref.size
        if pos != flat.size:
            raise ShapeError(f"flat vector has {flat.size} entries, model has {pos}")
        return out


def param_count(hidden: int, input_size: int, output_size: int) -> int:
    h, d, o = hidden, input_size, output_size
    return 4 * h * (d + h) + 4 * h + o * h + o


def init_params(hidden: int, input_size: int, output_size: int, rng: np.random.Generator) -> LstmParams:
    """Uniform(-1/sqrt(h), 1/sqrt(h)) weights, forget-gate bias 1, other biases 0."""
    h = hidden
    r = 1.0 / np.sqrt(h)
    b = np.zeros((4 * h, 1))
    b[h : 2 * h] = 1.0
    return LstmParams(
        W_ih=rng.uniform(-r, r, (4 * h, input_size)),
        W_hh=rng.uniform(-r, r, (4 * h, h)),
        b=b,
        W_out=rng.uniform(-r, r, (output_size, h)),
        b_out=np.zeros((output_size, 1)),
    )


@dataclass
class SequenceBatch:
    """Time-major batch: ``inputs`` T x B x d, ``targets`` T' x B x o.

    Predictions are read from steps ``emit_offset .. emit_offset + T' - 1``.
    """

    inputs: np.ndarray
    targets: np.ndarray
    target_kind: str
    emit_offset: int

    def __post_init__(self):
        if self.inputs.ndim != 3 or self.targets.ndim != 3:
            raise ShapeError("inputs and targets must be 3-D (time, batch, width)")
        if self.inputs.shape[1] != self.targets.shape[1]:
            raise ShapeError("batch size differs between inputs and targets")
        if self.emit_offset + self.targets.shape[0] > self.inputs.shape[0]:
            raise ShapeError("emission window runs past the end of the inputs")

    @property
    def steps(self) -> int:
        return self.inputs.shape[0]

    @property
    def size(self) -> int:
        return self.inputs.shape[1]

    @property
    def input_width(self) -> int:
        return self.inputs.shape[2]

    @property
    def output_width(self) -> int:
        return self.targets.shape[2]


def _cell(ops, x, h, c, WihT, WhhT, bias, hsize):
    z = ops.add_row(ops.add(ops.matmul(x, WihT), ops.matmul(h, WhhT)), bias)
    i = ops.sigmoid(ops.cols(z, 0, hsize))
    f = ops.sigmoid(ops.cols(z, hsize, 2 * hsize))
    g = ops.tanh(ops.cols(z, 2 * hsize, 3 * hsize))
    o = ops.sigmoid(ops.cols(z, 3 * hsize, 4 * hsize))
    c_new = ops.add(ops.mul(f, c), ops.mul(i, g))
    h_new = ops.mul(o, ops.tanh(c_new))
    return h_new, c_new


def _bind(ops, params: LstmParams):
    P = {k: ops.param(getattr(params, k), k) for k in PARAM_NAMES}
    return (
        P,
        ops.transpose(P["W_ih"]),
        ops.transpose(P["W_hh"]),
        ops.transpose(P["b"]),
        ops.transpose(P["W_out"]),
        ops.transpose(P["b_out"]),
    )


def lstm_step(params: LstmParams, x_t: np.ndarray, h: np.ndarray, c: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """One untaped LSTM step on B x d input and B x h states."""
    hs = params.hidden
    if x_t.shape[1] != params.input_size or h.shape[1] != hs or c.shape != h.shape:
        raise ShapeError(f"lstm_step: x {x_t.shape}, h {h.shape}, c {c.shape} for hidden {hs}")
    return _cell(Eager, x_t, h, c, params.W_ih.T, params.W_hh.T, params.b.T, hs)


def _forward(ops, params: LstmParams, batch: SequenceBatch):
    if batch.input_width != params.input_size or batch.output_width != params.output_size:
        raise ShapeError(
            f"batch widths {batch.input_width}/{batch.output_width} vs model "
            f"{params.input_size}/{params.output_size}"
        )
    _, WihT, WhhT, bias, WoutT, bout = _bind(ops, params)
    hs, B = params.hidden, batch.size
    h = ops.const(np.zeros((B, hs)))
    c = ops.const(np.zeros((B, hs)))
    stop = batch.emit_offset + batch.targets.shape[0]
    emitted = []
    for t in range(stop):
        h, c = _cell(ops, ops.const(batch.inputs[t]), h, c, WihT, WhhT, bias, hs)
        if t >= batch.emit_offset:
            emitted.append(h)
    H = emitted[0] if len(emitted) == 1 else ops.concat_rows(emitted)
    return ops.add_row(ops.matmul(H, WoutT), bout)


def forward_sequence(params: LstmParams, batch: SequenceBatch) -> np.ndarray:
    """Logits T' x B x o from zero initial state."""
    flat = _forward(Eager, params, batch)
    return flat.reshape(batch.targets.shape)


def _flat_targets(batch: SequenceBatch) -> np.ndarray:
    return batch.targets.reshape(-1, batch.output_width)


def sequence_loss(logits: np.ndarray, batch: SequenceBatch) -> float:
    if logits.shape != batch.targets.shape:
        raise ShapeError(f"logits {logits.shape} vs targets {batch.targets.shape}")
    flat = logits.reshape(-1, batch.output_width)
    if batch.target_kind == "bitwise":
        return bce_with_logits(flat, _flat_targets(batch))
    if batch.target_kind == "digit-class":
        return softmax_xent(flat, _flat_targets(batch))
    raise ContractError(f"unknown target kind {batch.target_kind!r}")


def sequence_accuracy(logits: np.ndarray, batch: SequenceBatch) -> float:
    """Bitwise: fraction of bits with (logit > 0) == target. Digits: argmax hits."""
    if logits.shape != batch.targets.shape:
        raise ShapeError(f"logits {logits.shape} vs targets {batch.targets.shape}")
    if batch.target_kind == "bitwise":
        return float(np.mean((logits > 0) == (batch.targets > 0.5)))
    if batch.target_kind == "digit-class":
        return float(np.mean(logits.argmax(axis=-1) == batch.targets.argmax(axis=-1)))
    raise ContractError(f"unknown target kind {batch.target_kind!r}")


def loss_and_grads(params: LstmParams, batch: SequenceBatch):
    """Taped forward and backward pass.

    Returns ``(loss, grads, logits)`` where ``grads`` maps parameter names to
    arrays and ``logits`` has the target shape.
    """
    if batch.target_kind not in TARGET_KINDS:
        raise ContractError(f"unknown target kind {batch.target_kind!r}")
    tape = Tape()
    out = _forward(tape, params, batch)
    targets = _flat_targets(batch)
    if batch.target_kind == "bitwise":
        loss = tape.bce_with_logits(out, targets)
    else:
        loss = tape.softmax_xent(out, targets)
    grads = backward(tape, loss)
    return float(loss.value[0, 0]), grads, out.value.reshape(batch.targets.shape)
