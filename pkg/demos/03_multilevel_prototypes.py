"""Multi-level tuple representations and query-specific prototypes.

Shows the block structure of the stacked representation (one block per
frame-tuple cardinality), the cross-attention of a query over one class's
support rows, and the convex-hull property of the resulting prototype.
"""

import numpy as np

import tsamlt.tensor as T
from tsamlt.multilevel import MultiLevelConfig, MultiLevelNet, prototype, tuple_count
from tsamlt.tensor import Tensor

rng = np.random.default_rng(0)
config = MultiLevelConfig()  # cardinalities (1,2,3,4), representations (8,4,3,2)
net = MultiLevelNet(in_dim=64, m=8, config=config, rng=rng)

print("cardinality -> tuples enumerated -> representations kept")
for w, r in zip(config.cardinalities, config.tuple_reps):
    print(f"   w={w}:   C(8,{w}) = {tuple_count(8, w):2d}  ->  {r}")
print(f"total rows per video: {config.total_rows}")
print("block layout:", config.blocks())

support = [Tensor(rng.normal(size=(8, 64))) for _ in range(3)]  # one class, K=3
query = Tensor(rng.normal(size=(8, 64)))

keys = T.concat([net.build_multilevel(s)[0].rows for s in support], axis=0)
values = T.concat([net.build_multilevel(s)[2].rows for s in support], axis=0)
_, q_rep, _ = net.build_multilevel(query)

scores = net.attention(q_rep.rows, keys)
print(f"\nattention: {scores.shape[0]} query rows x {scores.shape[1]} support rows")
print("every row sums to 1:", np.allclose(scores.data.sum(axis=1), 1.0))

proto = prototype(scores, values)
lo, hi = values.data.min(axis=0), values.data.max(axis=0)
inside = np.all(proto.data >= lo - 1e-12) and np.all(proto.data <= hi + 1e-12)
print(f"prototype shape: {proto.shape}; rows inside support convex hull: {inside}")

# The prototype is query-specific: a different query attends differently.
other = Tensor(rng.normal(size=(8, 64)))
_, other_rep, _ = net.build_multilevel(other)
proto2 = prototype(net.attention(other_rep.rows, keys), values)
print("prototype changes with the query:",
      not np.allclose(proto.data, proto2.data))
