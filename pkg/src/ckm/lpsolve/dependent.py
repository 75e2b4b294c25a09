"""Marginal-preserving dependent rounding of a fractional bipartite b-matching.

Each step picks a cycle or a maximal path of fractional edges, splits it into
two alternating classes and shifts mass between them by a random amount whose
expectation is zero. Every entry keeps its marginal, and every node's degree
ends on the floor or ceiling of its fractional degree.
"""
from __future__ import annotations

import numpy as np

from ..constants import FEAS_TOL, SNAP_TOL


def _fractional(v):
    return SNAP_TOL < v < 1.0 - SNAP_TOL


def _walk(adj, start):
    """Walk unused fractional edges from ``start``; return the edge list of a cycle or path."""
    path_nodes = [start]
    path_edges = []
    seen = {start: 0}
    prev_edge = None
    node = start
    while True:
        nxt = None
        for other, edge in adj[node].items():
            if edge != prev_edge:
                nxt = (other, edge)
                break
        if nxt is None:
            return path_edges
        other, edge = nxt
        path_edges.append(edge)
        if other in seen:
            return path_edges[seen[other]:]
        seen[other] = len(path_edges)
        path_nodes.append(other)
        prev_edge = edge
        node = other


def dependent_round(w, row_caps, col_caps=None, rng=None):
    """Round ``w`` (rows x cols, entries in [0, 1]) to a 0/1 matrix.

    Requires row sums <= ``row_caps`` and column sums <= ``col_caps``
    (default 1). ``rng`` is a numpy Generator.
    """
    w = np.array(w, dtype=float)
    if w.ndim != 2:
        raise ValueError("w must be a matrix")
    nr, nc = w.shape
    row_caps = np.asarray(row_caps, dtype=float).reshape(nr)
    col_caps = np.ones(nc) if col_caps is None else np.asarray(col_caps, dtype=float).reshape(nc)
    if rng is None:
        raise ValueError("an explicit numpy Generator is required")
    if np.any(w < -FEAS_TOL) or np.any(w > 1 + FEAS_TOL):
        raise ValueError("entries of w must lie in [0, 1]")
    if np.any(w.sum(axis=1) > row_caps + FEAS_TOL):
        raise ValueError("a row sum exceeds its capacity")
    if np.any(w.sum(axis=0) > col_caps + FEAS_TOL):
        raise ValueError("a column sum exceeds its capacity")
    w = np.clip(w, 0.0, 1.0)
    w[w <= SNAP_TOL] = 0.0
    w[w >= 1.0 - SNAP_TOL] = 1.0

    # nodes: rows are 0..nr-1, columns nr..nr+nc-1; adj[node][other] = (i, j)
    adj = {v: {} for v in range(nr + nc)}
    for i, j in zip(*np.nonzero((w > 0) & (w < 1))):
        i, j = int(i), int(j)
        adj[i][nr + j] = (i, j)
        adj[nr + j][i] = (i, j)

    def drop(edge):
        i, j = edge
        adj[i].pop(nr + j, None)
        adj[nr + j].pop(i, None)

    while True:
        live = [v for v in adj if adj[v]]
        if not live:
            break
        leaves = [v for v in live if len(adj[v]) == 1]
        edges = _walk(adj, leaves[0] if leaves else live[0])
        plus, minus = edges[0::2], edges[1::2]
        up_room = min([1.0 - w[e] for e in plus] + [w[e] for e in minus])
        down_room = min([w[e] for e in plus] + [1.0 - w[e] for e in minus])
        if rng.random() < down_room / (up_room + down_room):
            step = up_room
        else:
            step = -down_room
        for e in plus:
            w[e] += step
        for e in minus:
            w[e] -= step
        for e in edges:
            if not _fractional(w[e]):
                w[e] = float(round(w[e]))
                drop(e)
    return w.astype(np.int64)
