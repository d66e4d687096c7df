"""Function-preserving width expansion (Net2WiderNet) with zero-sum symmetry-breaking noise.

Conventions follow a row-vector layer ``y = x @ W``: a *producer* matrix
``W`` (m x n) emits the widened units along its columns, a *consumer* matrix
(n x p) reads them along its rows. Unit indices are 0-based; a plan's
``mapping[j]`` is the source unit of new unit ``j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import ContractError, ShapeError
from .model import LstmParams, SequenceBatch, forward_sequence
from .numcore import condition_number

NOISE_MODES = ("exact", "preconditioned")


@dataclass
class WidenPlan:
    n: int
    mapping: np.ndarray

    def __post_init__(self):
        self.mapping = np.asarray(self.mapping, dtype=np.int64)
        if self.mapping.ndim != 1 or self.mapping.size < self.n:
            raise ContractError("mapping must cover at least the original units")
        if not np.array_equal(self.mapping[: self.n], np.arange(self.n)):
            raise ContractError("the first n units must map to themselves")
        if ((self.mapping < 0) | (self.mapping >= self.n)).any():
            raise ContractError("mapping targets must lie in 0..n-1")

    @property
    def q(self) -> int:
        return self.mapping.size

    @property
    def counts(self) -> np.ndarray:
        """Replication factor of each source unit."""
        return np.bincount(self.mapping, minlength=self.n)

    @property
    def groups(self) -> List[np.ndarray]:
        """New indices mapping to each source unit; together they partition 0..q-1."""
        return [np.flatnonzero(self.mapping == s) for s in range(self.n)]

    @classmethod
    def identity(cls, n: int) -> "WidenPlan":
        return cls(n, np.arange(n))


def make_mapping(n: int, q: int, rng: np.random.Generator) -> WidenPlan:
    """Identity on the first ``n`` units, uniform random sources for the rest."""
    if n < 1 or q <= n:
        raise ContractError(f"need q > n >= 1, got n={n}, q={q}")
    extra = rng.integers(0, n, size=q - n)
    return WidenPlan(n, np.concatenate([np.arange(n), extra]))


def widen_producer(W: np.ndarray, plan: WidenPlan) -> np.ndarray:
    """Copy columns: ``U[:, j] = W[:, mapping[j]]``."""
    if W.ndim != 2 or W.shape[1] != plan.n:
        raise ShapeError(f"producer has {W.shape[-1]} columns, plan expects {plan.n}")
    return W[:, plan.mapping].copy()


def widen_consumer(W: np.ndarray, plan: WidenPlan) -> np.ndarray:
    """Copy rows scaled by replication: ``U[j] = W[mapping[j]] / count(mapping[j])``."""
    if W.ndim != 2 or W.shape[0] != plan.n:
        raise ShapeError(f"consumer has {W.shape[0]} rows, plan expects {plan.n}")
    return W[plan.mapping] / plan.counts[plan.mapping][:, None]


def zero_sum_noise(rows: int, k: int, scale: float, rng: np.random.Generator) -> np.ndarray:
    """``rows`` x ``k`` matrix whose rows each sum to zero.

    Per row: k-1 uniform cut points in (0, 1) plus the endpoints give k
    spacings summing to one; subtracting 1/k centres them, then ``scale``.
    """
    if k < 2:
        raise ContractError("zero-sum noise needs k >= 2")
    if scale < 0:
        raise ContractError("scale must be >= 0")
    cuts = rng.uniform(np.nextafter(0.0, 1.0), 1.0, size=(rows, k - 1))
    pts = np.concatenate([np.zeros((rows, 1)), np.sort(cuts, axis=1), np.ones((rows, 1))], axis=1)
    return (np.diff(pts, axis=1) - 1.0 / k) * scale


def add_group_noise(U: np.ndarray, plan: WidenPlan, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Add zero-sum noise across each duplicate group of a consumer-widened ``U`` (q x p).

    Within every column, the rows of a group keep their original sum.
    """
    U = U.copy()
    if scale == 0:
        return U
    for idx in plan.groups:
        if idx.size >= 2:
            U[idx] += zero_sum_noise(U.shape[1], idx.size, scale, rng).T
    return U


@dataclass
class NoiseSpec:
    mode: str = "preconditioned"
    eta: float = 0.01
    seed: Optional[int] = None

    def __post_init__(self):
        if self.mode not in NOISE_MODES:
            raise ContractError(f"noise mode must be one of {NOISE_MODES}, got {self.mode!r}")
        if self.eta < 0:
            raise ContractError("eta must be >= 0")


def widen_dense_pair(W1, b1, W2, new_width: int, spec: NoiseSpec, rng: np.random.Generator, plan=None):
    """Widen the hidden layer between ``h = act(x @ W1 + b1)`` and ``y = h @ W2``.

    Returns ``(U1, c1, U2, plan)``.
    """
    plan = plan or make_mapping(W1.shape[1], new_width, rng)
    U1 = widen_producer(W1, plan)
    c1 = np.asarray(b1)[plan.mapping].copy()
    U2 = add_group_noise(widen_consumer(W2, plan), plan, spec.eta * float(np.std(W2)), rng)
    if spec.mode == "preconditioned" and spec.eta > 0:
        s = spec.eta * float(np.std(W1))
        U1[:, plan.n :] += rng.uniform(-s, s, size=(U1.shape[0], plan.q - plan.n))
    return U1, c1, U2, plan


@dataclass
class ExpansionReport:
    old_hidden: int
    new_hidden: int
    mode: str
    eta: float
    max_drift: Optional[float] = None
    cond_before: Dict[str, float] = field(default_factory=dict)
    cond_after: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "old_hidden": self.old_hidden,
            "new_hidden": self.new_hidden,
            "mode": self.mode,
            "eta": self.eta,
            "max_drift": self.max_drift,
            "cond_before": dict(self.cond_before),
            "cond_after": dict(self.cond_after),
        }

    def to_text(self) -> str:
        lines = [
            f"expansion {self.old_hidden} -> {self.new_hidden} (mode={self.mode}, eta={self.eta:g})",
            f"max output drift: {'n/a' if self.max_drift is None else f'{self.max_drift:.3e}'}",
            f"{'matrix':<8}{'cond before':>16}{'cond after':>16}",
        ]
        for name in self.cond_before:
            lines.append(f"{name:<8}{_fmt_cond(self.cond_before[name]):>16}{_fmt_cond(self.cond_after.get(name)):>16}")
        return "\n".join(lines)


def _fmt_cond(x):
    if x is None:
        return "-"
    return "inf" if np.isinf(x) else f"{x:.4e}"


def _blocks(M: np.ndarray, h: int):
    return [M[g * h : (g + 1) * h] for g in range(4)]


def widen_lstm(params: LstmParams, new_hidden: int, spec: Optional[NoiseSpec] = None,
               rng: Optional[np.random.Generator] = None, plan: Optional[WidenPlan] = None,
               probe_batches: Sequence[SequenceBatch] = ()):
    """Widen the hidden state of an LSTM from h to ``new_hidden``.

    One plan is applied to every gate block. Gate rows of ``W_ih``, ``W_hh``
    and ``b`` are copied (producer side); the recurrent columns of ``W_hh``
    and the columns of ``W_out`` are split by replication factor (consumer
    side) and receive zero-sum noise across each duplicate group, scaled by
    ``eta * std`` of the teacher matrix. ``preconditioned`` mode also adds
    uniform noise of the same scale to the copied gate rows of ``W_ih`` and
    ``W_hh``, which perturbs the function by O(eta).

    Returns ``(student, report)``.
    """
    spec = spec or NoiseSpec()
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    h = params.hidden
    if new_hidden <= h:
        raise ContractError(f"new hidden size {new_hidden} must exceed {h}")
    plan = plan or make_mapping(h, new_hidden, rng)
    if plan.n != h or plan.q != new_hidden:
        raise ContractError("plan does not match the requested widths")
    m = plan.mapping

    # gate rows: producer copies within each block
    W_ih = np.concatenate([blk[m] for blk in _blocks(params.W_ih, h)])
    W_hh_rows = np.concatenate([blk[m] for blk in _blocks(params.W_hh, h)])
    b = np.concatenate([blk[m] for blk in _blocks(params.b, h)])

    W_hh = widen_consumer(W_hh_rows.T, plan)
    W_hh = add_group_noise(W_hh, plan, spec.eta * float(np.std(params.W_hh)), rng).T
    W_out = widen_consumer(params.W_out.T, plan)
    W_out = add_group_noise(W_out, plan, spec.eta * float(np.std(params.W_out)), rng).T

    if spec.mode == "preconditioned" and spec.eta > 0:
        new_rows = np.concatenate([np.arange(h, new_hidden) + g * new_hidden for g in range(4)])
        for M, teacher in ((W_ih, params.W_ih), (W_hh, params.W_hh)):
            s = spec.eta * float(np.std(teacher))
            M[new_rows] += rng.uniform(-s, s, size=(new_rows.size, M.shape[1]))

    student = LstmParams(W_ih=W_ih, W_hh=np.ascontiguousarray(W_hh), b=b,
                         W_out=np.ascontiguousarray(W_out), b_out=params.b_out.copy())
    report = expansion_report(params, student, probe_batches, mode=spec.mode, eta=spec.eta)
    return student, report


def max_output_drift(teacher: LstmParams, student: LstmParams, batches: Sequence[SequenceBatch]) -> float:
    drift = 0.0
    for batch in batches:
        diff = np.abs(forward_sequence(teacher, batch) - forward_sequence(student, batch))
        drift = max(drift, float(diff.max()))
    return drift


def expansion_report(teacher: LstmParams, student: LstmParams, probe_batches: Sequence[SequenceBatch] = (),
                     mode: str = "exact", eta: float = 0.0) -> ExpansionReport:
    if (teacher.input_size, teacher.output_size) != (student.input_size, student.output_size):
        raise ShapeError("teacher and student differ in input/output width")
    names = ("W_hh", "W_ih", "W_out")
    return ExpansionReport(
        old_hidden=teacher.hidden,
        new_hidden=student.hidden,
        mode=mode,
        eta=eta,
        max_drift=max_output_drift(teacher, student, probe_batches) if len(probe_batches) else None,
        cond_before={k: condition_number(getattr(teacher, k)) for k in names},
        cond_after={k: condition_number(getattr(student, k)) for k in names},
    )
