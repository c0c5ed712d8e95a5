"""
Incidence matrices and Laplacians
=================================

Any orientation of an undirected graph gives an incidence matrix ``Q`` with
``Q.T @ Q`` equal to the Laplacian. Consensus vectors are exactly the kernel
of ``Q`` when the graph is connected.
"""

import numpy as np

from niconsensus.topology import (
    apply_incidence,
    build_graph,
    cycle_graph,
    is_connected,
    laplacian,
    orient,
)

g = build_graph(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)])
print(g.edges, is_connected(g))

Q = orient(g)
print(Q.entries)
print(np.array_equal(Q.entries.T @ Q.entries, laplacian(g)))

# flipping edges changes Q but not the Laplacian
Q2 = orient(g, [True, False, True, False, False])
print(np.array_equal(Q2.entries.T @ Q2.entries, laplacian(g)))

# (Q kron I_2) applied to a two-dimensional consensus vector is zero
y = np.array([1.0, -2.0] * 4)
print(apply_incidence(Q, 2, y))

# a ring with one edge removed is still connected
ring = cycle_graph(5)
print(is_connected(build_graph(5, ring.edges[1:])))
