"""Graph partitioning into connected aggregates.

Greedy graph growing from frontier seeds, merging of small fragments and a
boundary refinement pass that trades vertices between neighbouring parts
when it reduces the cut without breaking connectivity.
"""
from __future__ import annotations

import heapq
import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components


@dataclass
class Partition:
    labels: np.ndarray
    n_parts: int

    def members(self) -> list[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        bounds = np.searchsorted(self.labels[order], np.arange(self.n_parts + 1))
        return [order[bounds[i]:bounds[i + 1]] for i in range(self.n_parts)]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_parts)


def _csr(graph) -> sp.csr_matrix:
    a = sp.csr_matrix(graph)
    a = ((a + a.T) != 0).astype(np.int8).tocsr()
    a.setdiag(0)
    a.eliminate_zeros()
    a.sort_indices()
    return a


def _peripheral(adj: sp.csr_matrix, start: int) -> int:
    order = breadth_first_order(adj, start, directed=False, return_predecessors=False)
    return int(order[-1])


def partition(graph, target_parts: int, seed: int = 0, refine_passes: int = 4) -> Partition:
    """Split ``graph`` into about ``target_parts`` connected aggregates."""
    adj = _csr(graph)
    n = adj.shape[0]
    if n == 0:
        raise ValueError("empty graph")
    if target_parts < 1:
        raise ValueError("target_parts must be positive")
    target_parts = int(min(target_parts, n))
    ncomp, comp = connected_components(adj, directed=False)
    if ncomp > 1:
        warnings.warn(f"graph has {ncomp} connected components; partitioning each", stacklevel=2)
    if target_parts == 1 and ncomp == 1:
        return Partition(np.zeros(n, dtype=np.int64), 1)

    ptr, idx = adj.indptr, adj.indices
    rng = np.random.default_rng(seed)
    size = n / target_parts
    labels = np.full(n, -1, dtype=np.int64)
    nparts = 0
    seeds: deque[int] = deque()
    start = _peripheral(adj, int(rng.integers(n)))
    seeds.append(start)
    tiebreak = rng.permutation(n)

    while True:
        s = -1
        while seeds:
            c = seeds.popleft()
            if labels[c] < 0:
                s = c
                break
        if s < 0:
            rest = np.flatnonzero(labels < 0)
            if len(rest) == 0:
                break
            s = _peripheral(adj, int(rest[0]))
            if labels[s] >= 0:
                s = int(rest[0])
        part = nparts
        nparts += 1
        labels[s] = part
        count = 1
        links = {}
        heap: list = []

        def push(v):
            for u in idx[ptr[v]:ptr[v + 1]]:
                if labels[u] < 0:
                    links[u] = links.get(u, 0) + 1
                    heapq.heappush(heap, (-links[u], tiebreak[u], u))

        push(s)
        grown = [s]
        while count < size and heap:
            negl, _, u = heapq.heappop(heap)
            if labels[u] >= 0 or -negl != links.get(u):
                continue
            labels[u] = part
            grown.append(u)
            count += 1
            push(u)
        for v in grown:
            for u in idx[ptr[v]:ptr[v + 1]]:
                if labels[u] < 0:
                    seeds.append(u)

    labels = _merge_small(adj, labels, nparts, size)
    for _ in range(refine_passes):
        if not _refine(adj, labels, size):
            break
    labels = _repair(adj, labels)
    return Partition(labels, int(labels.max()) + 1)


def _relabel(labels: np.ndarray) -> np.ndarray:
    _, inv = np.unique(labels, return_inverse=True)
    return inv.astype(np.int64)


def _merge_small(adj, labels, nparts, size) -> np.ndarray:
    """Merge fragments below half the target size into their best neighbour."""
    labels = labels.copy()
    for _ in range(3):
        sizes = np.bincount(labels, minlength=nparts)
        small = [a for a in np.argsort(sizes) if 0 < sizes[a] < 0.5 * size]
        if not small:
            break
        changed = False
        for a in small:
            mem = np.flatnonzero(labels == a)
            if len(mem) == 0 or len(mem) >= 0.5 * size:
                continue
            nb = labels[adj[mem].indices]
            nb = nb[nb != a]
            if len(nb) == 0:
                continue
            cand, cnt = np.unique(nb, return_counts=True)
            sz = np.bincount(labels, minlength=nparts)[cand]
            best = cand[np.lexsort((sz, -cnt))[0]]
            labels[mem] = best
            changed = True
        if not changed:
            break
    return _relabel(labels)


def _connected_without(adj, labels, v, part) -> bool:
    ptr, idx = adj.indptr, adj.indices
    nbrs = [u for u in idx[ptr[v]:ptr[v + 1]] if labels[u] == part]
    if len(nbrs) <= 1:
        return True
    target = set(nbrs)
    seen = {nbrs[0]}
    q = deque([nbrs[0]])
    while q and not target <= seen:
        w = q.popleft()
        for u in idx[ptr[w]:ptr[w + 1]]:
            if u != v and labels[u] == part and u not in seen:
                seen.add(u)
                q.append(u)
    return target <= seen


def _refine(adj, labels, size) -> bool:
    """One sweep of greedy boundary moves with positive cut gain."""
    ptr, idx = adj.indptr, adj.indices
    sizes = np.bincount(labels).astype(np.int64)
    lo, hi = 0.8 * size, 1.2 * size
    moved = False
    boundary = np.flatnonzero(np.diff(adj.indptr) > 0)
    for v in boundary:
        a = labels[v]
        nl = labels[idx[ptr[v]:ptr[v + 1]]]
        if np.all(nl == a):
            continue
        own = int(np.sum(nl == a))
        cand, cnt = np.unique(nl[nl != a], return_counts=True)
        j = np.argmax(cnt)
        b, gain = cand[j], cnt[j] - own
        if gain <= 0 or sizes[a] - 1 < lo or sizes[b] + 1 > hi:
            continue
        if not _connected_without(adj, labels, v, a):
            continue
        labels[v] = b
        sizes[a] -= 1
        sizes[b] += 1
        moved = True
    return moved


def _repair(adj, labels) -> np.ndarray:
    """Reassign stray pieces so that every aggregate is connected."""
    labels = labels.copy()
    for _ in range(10):
        fixed = True
        nparts = labels.max() + 1
        # components of the graph restricted to same-label edges
        coo = adj.tocoo()
        keep = labels[coo.row] == labels[coo.col]
        sub = sp.csr_matrix((np.ones(keep.sum()), (coo.row[keep], coo.col[keep])), shape=adj.shape)
        ncomp, comp = connected_components(sub, directed=False)
        if ncomp == nparts:
            break
        csize = np.bincount(comp)
        # the largest component of each label keeps the label
        best = {}
        for c in np.argsort(-csize, kind="stable"):
            lab = labels[np.flatnonzero(comp == c)[0]]
            best.setdefault(lab, c)
        for c in range(ncomp):
            mem = np.flatnonzero(comp == c)
            lab = labels[mem[0]]
            if best[lab] == c:
                continue
            nb = adj[mem].indices
            nb = nb[comp[nb] != c]
            if len(nb) == 0:
                labels[mem] = nparts
                nparts += 1
            else:
                labels[mem] = np.bincount(labels[nb]).argmax()
            fixed = False
        labels = _relabel(labels)
        if fixed:
            break
    return labels


def write_aggregation(path, part: Partition) -> None:
    with open(path, "w") as fh:
        for v, a in enumerate(part.labels):
            fh.write(f"{v} {a}\n")


def read_aggregation(path) -> Partition:
    data = np.loadtxt(path, dtype=np.int64, ndmin=2)
    labels = np.empty(len(data), dtype=np.int64)
    labels[data[:, 0]] = data[:, 1]
    return Partition(labels, int(labels.max()) + 1)
