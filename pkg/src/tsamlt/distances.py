"""Distances between multi-level representations and the fused classifier.

Two complementary distances are computed per (query, class) pair: an
entropically regularized optimal-transport cost between the two row sets
(appearance/semantic matching, order-free) and a squared sequence distance
(order-sensitive).  A small fusion network combines them into per-class
scores that feed a cross-entropy loss.

The Sinkhorn solver runs in the log domain with uniform marginals and is
differentiated by unrolling exactly the iterations it executed.  An exact
assignment solver (valid because uniform equal marginals reduce the
transport LP to an assignment problem) serves as its independent oracle.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import tensor as T
from .nn import BatchNorm1d, Linear, Module
from .tensor import Tensor

__all__ = [
    "cost_matrix",
    "sinkhorn",
    "exact_ot",
    "seq_distance",
    "FusionNet",
    "fuse",
    "classify_and_loss",
]


def cost_matrix(query_rep: Tensor, proto: Tensor) -> Tensor:
    """Pairwise Euclidean distances between two equally-sized row sets."""
    if query_rep.shape != proto.shape:
        raise ValueError(
            f"cost matrix expects matching shapes, got {query_rep.shape} vs {proto.shape}"
        )
    return T.pairwise_dist(query_rep, proto)


def sinkhorn(
    cost: Tensor,
    epsilon: float,
    max_iters: int = 100,
    tol: float = 1e-6,
    polish: bool = False,
) -> tuple[Tensor, Tensor]:
    """Entropic optimal transport with uniform marginals.

    ``cost`` may carry leading batch dimensions: (..., n, m).  Returns the
    transport plan (same shape) and the transport objective sum(C * P) per
    batch element.  Alternating log-domain updates run until the plan's
    worst marginal violation drops below ``tol`` or ``max_iters`` is hit;
    a non-finite intermediate raises, which signals an epsilon too small
    for float64 even in the log domain.

    At small epsilon the alternating updates enter a Theta(1/t) regime and
    cannot reach tight marginal tolerances in reasonable time; with
    ``polish=True`` a damped Newton solve on the dual potentials finishes
    the job.  The polish is not differentiable, so it refuses to run under
    an active tape; gradients always come from unrolling the executed
    alternating updates.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if cost.ndim < 2:
        raise ValueError("cost must be at least 2-D")
    n, m = cost.shape[-2], cost.shape[-1]
    batch = cost.shape[:-2]
    log_a = -np.log(n)  # uniform row marginal 1/n
    log_b = -np.log(m)

    log_kernel = T.scale(cost, -1.0 / epsilon)
    packed = _alternating_duals(log_kernel, max_iters, tol)
    row_dual = packed[..., :n]
    col_dual = packed[..., n:]

    violation = _marginal_violation(
        log_kernel.data, row_dual.data, col_dual.data, n, m
    )
    if polish and violation >= tol:
        if T.active_tape() is not None:
            raise T.TapeError("sinkhorn polish is not differentiable; "
                              "run it outside any gradient tape")
        row_np, col_np = _newton_polish(
            log_kernel.data, row_dual.data.copy(), col_dual.data.copy(), tol
        )
        row_dual, col_dual = Tensor(row_np), Tensor(col_np)

    plan = T.exp(
        T.add(
            T.add(log_kernel, row_dual.reshape(batch + (n, 1))),
            col_dual.reshape(batch + (1, m)),
        )
    )
    dist = T.tsum(T.mul(cost, plan), axis=(-2, -1))
    return plan, dist


def _alternating_duals(log_kernel: Tensor, max_iters: int, tol: float) -> Tensor:
    """Run the alternating log-domain updates; one tape record for the loop.

    Returns the duals packed as (..., n + m).  The loop runs in plain
    numpy, keeping the dual trajectory so the backward pass can replay the
    executed iterations in reverse with the exact adjoint of each update.
    """
    k = log_kernel.data
    n, m = k.shape[-2], k.shape[-1]
    log_a, log_b = -np.log(n), -np.log(m)
    row = np.zeros(k.shape[:-2] + (n,))
    col = np.zeros(k.shape[:-2] + (m,))
    trajectory: list[tuple[np.ndarray, np.ndarray]] = []

    def lse(x, axis):
        mx = x.max(axis=axis, keepdims=True)
        return np.log(np.exp(x - mx).sum(axis=axis, keepdims=True)) + mx

    for _ in range(max_iters):
        prev_col = col
        row = log_a - lse(k + col[..., None, :], axis=-1)[..., 0]
        col = log_b - lse(k + row[..., :, None], axis=-2)[..., 0, :]
        trajectory.append((prev_col, row))
        plan = np.exp(k + row[..., :, None] + col[..., None, :])
        violation = max(
            np.abs(plan.sum(axis=-1) - 1.0 / n).max(),
            np.abs(plan.sum(axis=-2) - 1.0 / m).max(),
        )
        if violation < tol:
            break

    def backward(g):
        # Reverse replay: each iteration's updates are log-softmax maps, so
        # their adjoints are softmax-weighted sums.
        grad_k = np.zeros_like(k)
        row_bar = g[..., :n]
        col_bar = g[..., n:]
        for prev_col, row_t in reversed(trajectory):
            sm_col = _softmax(k + row_t[..., :, None], axis=-2)
            b_bar = -sm_col * col_bar[..., None, :]
            grad_k += b_bar
            row_bar = row_bar + b_bar.sum(axis=-1)
            sm_row = _softmax(k + prev_col[..., None, :], axis=-1)
            a_bar = -sm_row * row_bar[..., :, None]
            grad_k += a_bar
            col_bar = a_bar.sum(axis=-2)
            row_bar = np.zeros_like(row_bar)
        return (grad_k,)

    packed = np.concatenate([row, col], axis=-1)
    return T.register_op(packed, (log_kernel,), backward)


def _softmax(x, axis):
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def _marginal_violation(log_kernel, row_dual, col_dual, n, m) -> float:
    plan = np.exp(log_kernel + row_dual[..., :, None] + col_dual[..., None, :])
    return max(
        np.abs(plan.sum(axis=-1) - 1.0 / n).max(),
        np.abs(plan.sum(axis=-2) - 1.0 / m).max(),
    )


def _newton_polish(log_kernel, row_dual, col_dual, tol, max_steps: int = 100):
    """Drive the dual potentials to the fixpoint with damped Newton steps.

    Levenberg-Marquardt damping plus a gauge projection (the duals are only
    determined up to a constant shift) keep the near-singular Hessian of
    assignment-like instances in check.  Operates per batch element.
    """
    n, m = log_kernel.shape[-2:]
    a = np.full(n, 1.0 / n)
    b = np.full(m, 1.0 / m)
    gauge = np.concatenate([np.ones(n), -np.ones(m)]) / np.sqrt(n + m)
    flat_k = log_kernel.reshape(-1, n, m)
    flat_r = row_dual.reshape(-1, n)
    flat_c = col_dual.reshape(-1, m)

    for idx in range(flat_k.shape[0]):
        k, phi, psi = flat_k[idx], flat_r[idx], flat_c[idx]
        for _ in range(max_steps):
            plan = np.exp(k + phi[:, None] + psi[None, :])
            rows, cols = plan.sum(axis=1), plan.sum(axis=0)
            viol = max(np.abs(rows - a).max(), np.abs(cols - b).max())
            if viol < tol:
                break
            hess = np.block([[np.diag(rows), plan], [plan.T, np.diag(cols)]])
            lam = max(1e-13, 0.05 * viol)
            grad = np.concatenate([a - rows, b - cols])
            step = np.linalg.solve(hess + lam * np.eye(n + m), grad)
            step -= (step @ gauge) * gauge
            norm = np.abs(step).max()
            if norm > 30.0:  # log-domain steps beyond this are meaningless
                step *= 30.0 / norm
            alpha = 1.0
            for _ in range(40):
                cand_phi = phi + alpha * step[:n]
                cand_psi = psi + alpha * step[n:]
                with np.errstate(over="ignore"):
                    cand = np.exp(k + cand_phi[:, None] + cand_psi[None, :])
                cand_viol = max(
                    np.abs(cand.sum(axis=1) - a).max(),
                    np.abs(cand.sum(axis=0) - b).max(),
                )
                if np.isfinite(cand_viol) and cand_viol < viol * 0.999:
                    phi, psi = cand_phi, cand_psi
                    break
                alpha *= 0.5
            else:
                # No improving Newton step: one alternating sweep instead.
                mx = (k + psi[None, :]).max(axis=1, keepdims=True)
                phi = -np.log(n) - (
                    np.log(np.exp(k + psi[None, :] - mx).sum(axis=1)) + mx[:, 0]
                )
                mx = (k + phi[:, None]).max(axis=0, keepdims=True)
                psi = -np.log(m) - (
                    np.log(np.exp(k + phi[:, None] - mx).sum(axis=0)) + mx[0, :]
                )
        flat_r[idx], flat_c[idx] = phi, psi
    return flat_r.reshape(row_dual.shape), flat_c.reshape(col_dual.shape)


def exact_ot(cost: np.ndarray) -> float:
    """Exact transport cost for uniform equal marginals on a square cost.

    With both marginals uniform and n = m the LP's optimum is a permutation
    matrix scaled by 1/n, so this is the minimum-cost perfect assignment
    divided by n.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"exact_ot needs a square matrix, got {c.shape}")
    n = c.shape[0]
    if n > 12:
        raise ValueError("exact oracle limited to n <= 12")
    rows, cols = linear_sum_assignment(c)
    return float(c[rows, cols].sum() / n)


def seq_distance(a: Tensor, b: Tensor) -> Tensor:
    """Squared Frobenius distance between two row sets, averaged over rows."""
    if a.shape != b.shape:
        raise ValueError(f"seq_distance shape mismatch: {a.shape} vs {b.shape}")
    diff = T.sub(a, b)
    return T.tsum(T.mul(diff, diff)) / a.shape[0]


class FusionNet(Module):
    """Linear 2N -> N, leaky ReLU, then 1-D batch norm over the query batch.

    The linear starts at negative identity blocks plus noise, i.e. the
    initial fused score is roughly -(ot + seq) per class: distances start
    oriented as similarities and training reshapes the mix from there.
    """

    def __init__(self, way: int, rng: np.random.Generator):
        self.way = way
        self.linear = Linear(2 * way, way, rng)
        eye = np.eye(way)
        self.linear.weight.data = (
            -np.vstack([eye, eye]) + 0.02 * rng.normal(size=(2 * way, way))
        )
        self.bn = BatchNorm1d(way)

    def __call__(self, combined: Tensor, training: bool) -> Tensor:
        if combined.shape[-1] != 2 * self.way:
            raise ValueError(
                f"fusion expects {2 * self.way} inputs, got {combined.shape[-1]}"
            )
        return self.bn(T.leaky_relu(self.linear(combined)), training)


def fuse(ot_dists: Tensor, seq_dists: Tensor, net: FusionNet, training: bool = False) -> Tensor:
    """Fuse per-class OT and sequence distances into per-class scores.

    Inputs are (queries, N) matrices; the combined vector is the fixed
    order [ot || seq].  Training mode normalizes over the query batch, so
    the whole episode's queries go through together.
    """
    if ot_dists.shape != seq_dists.shape:
        raise ValueError("distance blocks must have matching shapes")
    combined = T.concat([ot_dists, seq_dists], axis=-1)
    return net(combined, training)


def classify_and_loss(scores: Tensor, labels) -> tuple[Tensor, Tensor]:
    """Class probabilities and mean cross-entropy from per-class scores.

    ``scores`` is (queries, N); larger means more likely.  Labels are
    0-based episode-local class indices.
    """
    if scores.ndim != 2 or scores.shape[1] < 2:
        raise ValueError("scores must be (queries, N >= 2)")
    q, n = scores.shape
    labels = np.asarray(labels, dtype=int)
    if labels.shape != (q,):
        raise ValueError("one label per query required")
    if labels.min() < 0 or labels.max() >= n:
        raise ValueError(f"labels must lie in [0, {n - 1}]")
    log_probs = T.sub(scores, T.logsumexp(scores, axis=-1, keepdims=True))
    probs = T.exp(log_probs)
    mask = np.zeros((q, n))
    mask[np.arange(q), labels] = 1.0
    loss = T.scale(T.tsum(T.mul(log_probs, Tensor(mask))), -1.0 / q)
    return probs, loss
