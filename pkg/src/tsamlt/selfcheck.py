"""Built-in invariant suite behind the `selftest` command.

Each check returns (name, passed, detail).  Failures never raise; they
become report entries so a broken build still produces a full report.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .alignment import TaskModulationNet, TemporalAligner, time_warp
from .distances import exact_ot, sinkhorn
from .multilevel import MultiLevelConfig, MultiLevelNet, enumerate_tuples, prototype
from .tensor import Tape, Tensor

Check = tuple[str, bool, str]


def _fd_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


def _rel(a, b):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return float(np.max(np.abs(a - b) / denom))


def check_op_gradients() -> Check:
    ops = {
        "softmax": lambda x: T.softmax(x, axis=-1),
        "logsumexp": lambda x: T.logsumexp(x, axis=-1),
        "row_normalize": T.row_normalize,
        "leaky_relu": T.leaky_relu,
        "pairwise": lambda x: T.pairwise_dist(x, Tensor(np.ones((3, 4)))),
    }
    worst = 0.0
    for name, op in ops.items():
        for seed in range(5):
            x0 = np.random.default_rng(seed).uniform(-2, 2, size=(3, 4))
            x0[np.abs(x0) < 1e-3] += 0.01
            x = Tensor(x0, requires_grad=True)
            with Tape() as tape:
                tape.backward(op(x).sum())
            fd = _fd_grad(lambda arr: op(Tensor(arr)).data.sum(), x0.copy())
            worst = max(worst, _rel(x.grad, fd))
    return ("op gradients vs finite differences", worst < 1e-4, f"worst rel err {worst:.2e}")


def check_sinkhorn_vs_oracle() -> Check:
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 9))
        pts = rng.normal(scale=3.0, size=(2, n, 3))
        cost = np.linalg.norm(pts[0][:, None] - pts[1][None, :], axis=-1)
        _, dist = sinkhorn(Tensor(cost), epsilon=0.005, max_iters=200, tol=1e-8, polish=True)
        exact = exact_ot(cost)
        worst = max(worst, abs(dist.item() - exact) / max(exact, 1e-12))
    return ("sinkhorn objective within 1% of assignment oracle", worst < 0.01, f"worst rel {worst:.2e}")


def check_combinatorics() -> Check:
    for m in range(1, 11):
        for w in range(1, m + 1):
            if len(enumerate_tuples(m, w)) != math.comb(m, w):
                return ("tuple counts match binomials", False, f"C({m},{w})")
    rows = MultiLevelConfig().total_rows
    rows5 = MultiLevelConfig(
        cardinalities=(1, 2, 3, 4, 5), tuple_reps=(8, 4, 3, 2, 1)
    ).total_rows
    ok = rows == 17 and rows5 == 18
    return ("tuple counts match binomials", ok, f"17 -> {rows}, 18 -> {rows5}")


def check_warp_identity() -> Check:
    rng = np.random.default_rng(1)
    f = Tensor(rng.normal(size=(8, 6)))
    out = time_warp(f, Tensor([1.0]), Tensor([0.0]))
    exact = np.array_equal(out.data, f.data)
    half = time_warp(f, Tensor([0.5]), Tensor([0.0]))
    hand = np.allclose(half.data[0], 0.25 * f.data[1] + 0.75 * f.data[2], atol=1e-12)
    shifted = time_warp(f, Tensor([1.0]), Tensor([2.0]))
    clamp = all(np.array_equal(row, f.data[-1]) for row in shifted.data)
    detail = "" if exact and hand and clamp else (
        f"identity={exact} hand={hand} border_clamp={clamp}"
    )
    return ("warp identity, hand case, border clamp", exact and hand and clamp, detail)


def check_prototype_invariances() -> Check:
    rng = np.random.default_rng(2)
    cfg = MultiLevelConfig(dim_model=16, dim_k=8, dim_v=8)
    net = MultiLevelNet(6, 8, cfg, rng)
    support = [Tensor(rng.normal(size=(8, 6))) for _ in range(3)]
    query = Tensor(rng.normal(size=(8, 6)))
    _, q, _ = net.build_multilevel(query)

    def stacked(videos):
        keys, values = [], []
        for s in videos:
            k, _, v = net.build_multilevel(s)
            keys.append(k.rows)
            values.append(v.rows)
        return T.concat(keys, axis=0), T.concat(values, axis=0)

    keys, values = stacked(support)
    base = prototype(net.attention(q.rows, keys), values).data
    keys2, values2 = stacked(support[::-1])
    flipped = prototype(net.attention(q.rows, keys2), values2).data
    drift = float(np.abs(base - flipped).max())
    lo = values.data.min(axis=0) - 1e-12
    hi = values.data.max(axis=0) + 1e-12
    hull = bool(np.all(base >= lo) and np.all(base <= hi))
    return (
        "prototype permutation invariance and convex hull",
        drift < 1e-12 and hull,
        f"drift {drift:.1e}",
    )


def check_modulation_simplex() -> Check:
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        net = TaskModulationNet(4, rng)
        net.head.weight.data = rng.normal(size=net.head.weight.shape)
        videos = [Tensor(rng.normal(size=(6, 4))) for _ in range(3)]
        w = net(videos).weights.data
        worst = max(worst, abs(float(w.sum()) - 1.0))
        if w.min() < 0:
            return ("modulation weights on the simplex", False, "negative weight")
    return ("modulation weights on the simplex", worst < 1e-12, f"worst |sum-1| {worst:.1e}")


def check_aligner_identity() -> Check:
    rng = np.random.default_rng(3)
    aligner = TemporalAligner(5, rng)
    videos = [Tensor(np.random.default_rng(s).normal(size=(8, 5))) for s in range(4)]
    out = aligner(videos)
    ok = all(np.array_equal(a.data, b.data) for a, b in zip(videos, out))
    return ("identity-initialised aligner is a no-op", ok, "")


def run_all() -> list[Check]:
    checks = [
        check_op_gradients,
        check_sinkhorn_vs_oracle,
        check_combinatorics,
        check_warp_identity,
        check_prototype_invariances,
        check_modulation_simplex,
        check_aligner_identity,
    ]
    results = []
    for check in checks:
        try:
            results.append(check())
        except Exception as exc:  # a crash is a failing property, not a crash
            results.append((check.__name__, False, f"raised {type(exc).__name__}: {exc}"))
    return results
