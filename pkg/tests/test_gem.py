import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from liferec.errors import ContractError, ShapeError
from liferec.gem import EpisodicMemory, GemConfig, flat_grad, gem_project, kkt_residual, solve_nnqp, task_gradients
from liferec.model import LstmParams, init_params, loss_and_grads
from liferec.tasks import gen_copy_batch


def dual_oracle(C, q):
    """Exhaustive active-set search: min 0.5 v'Cv + q'v over v >= 0."""
    n = q.size
    best, best_v = 0.0, np.zeros(n)
    for r in range(1, n + 1):
        for S in itertools.combinations(range(n), r):
            S = list(S)
            v = np.zeros(n)
            v[S] = np.linalg.lstsq(C[np.ix_(S, S)], -q[S], rcond=None)[0]
            if (v < -1e-12).any():
                continue
            obj = 0.5 * v @ C @ v + q @ v
            if obj < best:
                best, best_v = obj, v
    return best, best_v


def primal_oracle(g, G):
    """min ||z - g||^2 s.t. G z >= 0, by projecting g onto every face {z : G_A z = 0}."""
    best = np.inf
    t = G.shape[0]
    for r in range(t + 1):
        for A in itertools.combinations(range(t), r):
            if A:
                GA = G[list(A)]
                z = g - GA.T @ np.linalg.lstsq(GA @ GA.T, GA @ g, rcond=None)[0]
            else:
                z = g
            if (G @ z >= -1e-9).all():
                best = min(best, float(np.sum((z - g) ** 2)))
    return best


def random_instance(rng, p=None, t=None):
    p = p or int(rng.integers(2, 51))
    t = t or int(rng.integers(1, 9))
    G = rng.normal(size=(t, p))
    # push g against the stored gradients so several constraints are violated
    g = rng.normal(size=p) - rng.uniform(0, 1.5) * G.mean(axis=0)
    return g, G


def batch(seed, length=3):
    return gen_copy_batch(length, 10, np.random.default_rng(seed))


# -- memory ------------------------------------------------------------------

def test_remember_keeps_latest_only():
    mem = EpisodicMemory()
    mem.remember(1, batch(0)).remember(1, batch(1))
    assert len(mem) == 1
    np.testing.assert_array_equal(mem[1].inputs, batch(1).inputs)


def test_memory_counts_and_order():
    mem = EpisodicMemory()
    for t in (1, 2, 3):
        mem.remember(t, batch(t))
    assert mem.task_ids == [1, 2, 3]
    assert mem.n_examples == 30
    assert [tid for tid, _ in mem] == [1, 2, 3]


def test_stored_batches_are_frozen():
    b = batch(0)
    mem = EpisodicMemory().remember(1, b)
    b.inputs[:] = 7.0
    assert mem[1].inputs.max() <= 1.0
    with pytest.raises(ValueError):
        mem[1].inputs[0, 0, 0] = 3.0


def test_empty_memory_gives_empty_G():
    p = init_params(4, 8, 7, np.random.default_rng(0))
    G = task_gradients(p, EpisodicMemory())
    assert G.shape == (0, p.n_params)
    g = np.ones(p.n_params)
    assert gem_project(g, G) is g


def test_task_gradients_definition():
    rng = np.random.default_rng(0)
    p = init_params(4, 8, 7, rng)
    b = batch(5)
    G = task_gradients(p, EpisodicMemory().remember(1, b), clip=None)
    assert G.shape == (1, p.n_params)
    _, grads, _ = loss_and_grads(p, b)
    np.testing.assert_array_equal(G[0], LstmParams(**grads).flatten())


def test_task_gradients_are_clipped_and_fresh():
    rng = np.random.default_rng(0)
    p = init_params(4, 8, 7, rng)
    mem = EpisodicMemory().remember(1, batch(5)).remember(2, batch(6, 5))
    G = task_gradients(p, mem, clip=1e-3)
    np.testing.assert_allclose(np.linalg.norm(G, axis=1), 1e-3, rtol=1e-12)
    p.W_out += 0.5
    assert not np.array_equal(task_gradients(p, mem, clip=1e-3), G)


def test_flat_grad_order():
    p = init_params(3, 8, 7, np.random.default_rng(0))
    g = flat_grad(p, batch(2), clip=None)
    _, grads, _ = loss_and_grads(p, batch(2))
    np.testing.assert_array_equal(g[: grads["W_ih"].size], grads["W_ih"].ravel())
    np.testing.assert_array_equal(g[-7:], grads["b_out"].ravel())


# -- QP ----------------------------------------------------------------------

def test_nnqp_nonnegative_q():
    sol = solve_nnqp(np.eye(3), np.array([0.0, 1.0, 2.0]))
    np.testing.assert_array_equal(sol.x, 0.0)
    assert sol.converged


def test_nnqp_scalar():
    sol = solve_nnqp(np.array([[1.0]]), np.array([-1.0]))
    assert sol.x[0] == pytest.approx(1.0, abs=1e-12)


def test_nnqp_three_constraints_match_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        A = rng.normal(size=(3, 6))
        C, q = A @ A.T, rng.normal(size=3)
        best, _ = dual_oracle(C, q)
        sol = solve_nnqp(C, q)
        assert 0.5 * sol.x @ C @ sol.x + q @ sol.x == pytest.approx(best, abs=1e-6)
        assert (sol.x >= 0).all()


def test_nnqp_rank_deficient():
    # duplicated constraint rows make C singular
    G = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    g = np.array([-1.0, -2.0])
    sol = solve_nnqp(G @ G.T, G @ g)
    assert sol.converged
    assert kkt_residual(G @ G.T, G @ g, sol.x) <= 1e-9


def test_nnqp_shape_error():
    with pytest.raises(ShapeError):
        solve_nnqp(np.eye(2), np.ones(3))


def test_gem_config_validation():
    with pytest.raises(ContractError):
        GemConfig(gamma=-0.1)
    with pytest.raises(ContractError):
        GemConfig(qp_tol=0)


# -- projection --------------------------------------------------------------

def test_halfspace_projection_example():
    out = gem_project(np.array([1.0, -1.0]), np.array([[0.0, 1.0]]), GemConfig(gamma=0.0))
    np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-12)


def test_feasible_gradient_returned_unchanged():
    g = np.array([1.0, 2.0, 3.0])
    G = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    out, info = gem_project(g, G, return_info=True)
    assert out is g and info["violated"] == 0 and info["qp"] is None


def test_projection_matches_primal_oracle():
    rng = np.random.default_rng(1)
    cfg = GemConfig(gamma=0.0)
    for _ in range(40):
        g, G = random_instance(rng, p=50, t=5)
        out = gem_project(g, G, cfg)
        assert abs(np.sum((out - g) ** 2) - primal_oracle(g, G)) <= 1e-5
        assert (G @ out >= -1e-8).all()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 2.0))
def test_gamma_shift_identity(seed, gamma):
    g, G = random_instance(np.random.default_rng(seed))
    base = gem_project(g, G, GemConfig(gamma=0.0))
    shifted = gem_project(g, G, GemConfig(gamma=gamma))
    if base is g:
        assert shifted is g
    else:
        np.testing.assert_allclose(shifted - base, gamma * G.sum(axis=0), atol=1e-10, rtol=0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_constraints_satisfied_property(seed):
    g, G = random_instance(np.random.default_rng(seed))
    out = gem_project(g, G, GemConfig(gamma=0.0))
    assert (G @ out >= -1e-8).all()

