"""Episodic memory and the gradient projection that keeps past-task losses from rising.

Each stored task contributes one constraint ``<g_new, g_k> >= 0``. The
projection is solved through its dual, a non-negative QP with one variable
per stored task, and the projected gradient is recovered as
``g + G^T (v + gamma)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from .errors import ContractError, ShapeError
from .model import LstmParams, SequenceBatch, loss_and_grads
from .numcore import clip_by_global_norm

log = logging.getLogger(__name__)


@dataclass
class GemConfig:
    gamma: float = 0.5
    qp_max_iters: int = 1000
    qp_tol: float = 1e-10
    violation_eps: float = 0.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ContractError("gamma must be >= 0")
        if self.qp_tol <= 0:
            raise ContractError("qp_tol must be > 0")
        if self.qp_max_iters < 1:
            raise ContractError("qp_max_iters must be >= 1")


def _freeze(batch: SequenceBatch) -> SequenceBatch:
    inputs = batch.inputs.copy()
    targets = batch.targets.copy()
    inputs.flags.writeable = False
    targets.flags.writeable = False
    return SequenceBatch(inputs, targets, batch.target_kind, batch.emit_offset)


class EpisodicMemory:
    """One stored minibatch per task, kept in task order.

    ``b_size`` and ``n_tasks`` describe a fixed slot budget split evenly
    across a known number of tasks; they are recorded but the default
    one-batch-per-task policy does not consult them.
    """

    def __init__(self, b_size: Optional[int] = None, n_tasks: Optional[int] = None):
        self.b_size = b_size
        self.n_tasks = n_tasks
        self._store: Dict[int, SequenceBatch] = {}

    def remember(self, task_id: int, batch: SequenceBatch) -> "EpisodicMemory":
        self._store[task_id] = _freeze(batch)
        return self

    def __len__(self):
        return len(self._store)

    def __iter__(self) -> Iterator[Tuple[int, SequenceBatch]]:
        return iter(self._store.items())

    def __contains__(self, task_id):
        return task_id in self._store

    def __getitem__(self, task_id) -> SequenceBatch:
        return self._store[task_id]

    @property
    def task_ids(self):
        return list(self._store)

    @property
    def n_examples(self) -> int:
        return sum(b.size for b in self._store.values())


def flat_grad(params: LstmParams, batch: SequenceBatch, clip: Optional[float] = 1.0) -> np.ndarray:
    _, grads, _ = loss_and_grads(params, batch)
    if clip is not None:
        grads = clip_by_global_norm(grads, clip)
    return LstmParams(**grads).flatten()


def task_gradients(params: LstmParams, memory: EpisodicMemory, clip: Optional[float] = 1.0) -> np.ndarray:
    """Rows are clipped, flattened loss gradients on each stored batch at ``params``.

    An empty memory gives a 0 x p matrix, which :func:`gem_project` treats as
    "no constraints".
    """
    if len(memory) == 0:
        return np.zeros((0, params.n_params))
    return np.stack([flat_grad(params, batch, clip) for _, batch in memory])


@dataclass
class QPSolution:
    x: np.ndarray
    iterations: int
    converged: bool
    residual: float


def kkt_residual(C: np.ndarray, q: np.ndarray, v: np.ndarray) -> float:
    """Infinity norm of min(v, Cv + q); zero exactly at a KKT point of the NNQP."""
    return float(np.max(np.abs(np.minimum(v, C @ v + q)))) if v.size else 0.0


def _objective(C, q, v):
    return 0.5 * v @ C @ v + q @ v


def _face_solve(C, q, S):
    z = np.zeros_like(q)
    if S.any():
        z[S] = np.linalg.lstsq(C[np.ix_(S, S)], -q[S], rcond=None)[0]
    return z


def _active_set_polish(C, q, v, tol, max_rounds):
    """Lawson-Hanson style refinement starting from a feasible iterate."""
    n = q.size
    S = v > 0
    v = np.where(S, v, 0.0)
    for _ in range(max_rounds):
        z = _face_solve(C, q, S)
        # move toward the face optimum, dropping variables that hit zero
        inner = 0
        while S.any() and (z[S] <= 0).any() and inner < n:
            inner += 1
            blocked = S & (z <= 0)
            denom = v[blocked] - z[blocked]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(denom > 0, v[blocked] / denom, np.inf)
            alpha = min(1.0, float(ratios.min()))
            v = v + alpha * (z - v)
            v[~S] = 0.0
            S = S & (v > tol)
            v[~S] = 0.0
            z = _face_solve(C, q, S)
        v = np.where(S, np.maximum(z, 0.0), 0.0)
        w = C @ v + q
        free = ~S & (w < -tol)
        if not free.any():
            break
        S = S.copy()
        S[np.argmin(np.where(~S, w, np.inf))] = True
    return v


def solve_nnqp(C, q, max_iters: int = 1000, tol: float = 1e-10, eps: float = 1e-12) -> QPSolution:
    """Minimize ``0.5 v^T C v + q^T v`` subject to ``v >= 0`` for PSD ``C``.

    Projected gradient descent with step ``1 / (trace(C) + eps)``, then an
    active-set refinement on the support it found, which lands on the exact
    face solution once the support is right. The better of the two iterates
    (by KKT residual) is returned.
    """
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    q = np.asarray(q, dtype=np.float64).ravel()
    n = q.size
    if C.shape != (n, n):
        raise ShapeError(f"C {C.shape} does not match q of length {n}")
    if n == 0:
        return QPSolution(np.zeros(0), 0, True, 0.0)
    if np.all(q >= 0):
        return QPSolution(np.zeros(n), 0, True, 0.0)
    step = 1.0 / (np.trace(C) + eps)
    target = tol * (1.0 + float(np.max(np.abs(q))))
    v = np.zeros(n)
    it = 0
    for it in range(1, max_iters + 1):
        v = np.maximum(v - step * (C @ v + q), 0.0)
        if kkt_residual(C, q, v) <= target:
            break
    best, best_res = v, kkt_residual(C, q, v)
    polished = _active_set_polish(C, q, v, tol, max_rounds=3 * n + 10)
    res = kkt_residual(C, q, polished)
    if res < best_res or (res == best_res and _objective(C, q, polished) < _objective(C, q, best)):
        best, best_res = polished, res
    converged = best_res <= target
    if not converged:
        log.warning("nnqp: KKT residual %.3e after %d iterations", best_res, it)
    return QPSolution(best, it, converged, best_res)


def gem_project(g: np.ndarray, G: Optional[np.ndarray], config: Optional[GemConfig] = None,
                return_info: bool = False):
    """Project ``g`` so it has non-negative inner product with every row of ``G``.

    ``g`` is returned unchanged (same object) when no constraint is
    violated. With ``return_info`` a dict describing the solve is returned
    alongside the gradient.
    """
    config = config or GemConfig()
    info = {"violated": 0, "qp": None}
    if G is None or G.size == 0:
        return (g, info) if return_info else g
    if G.ndim != 2 or G.shape[1] != g.size:
        raise ShapeError(f"G {G.shape} incompatible with gradient of length {g.size}")
    dots = G @ g
    violated = dots < -config.violation_eps
    info["violated"] = int(violated.sum())
    if not violated.any():
        return (g, info) if return_info else g
    sol = solve_nnqp(G @ G.T, dots, max_iters=config.qp_max_iters, tol=config.qp_tol)
    info["qp"] = sol
    out = G.T @ (sol.x + config.gamma) + g
    return (out, info) if return_info else out
