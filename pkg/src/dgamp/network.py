"""Tree topologies and the min-sum style consensus-propagation engine.

Edges are undirected; internally every edge (u, v) is split into the two
directed messages u->v and v->u so that one synchronous sweep updates all
2(L-1) messages from the previous round's values.
"""

import heapq
import json

import numpy as np

from .errors import CycleDetected, Disconnected, DuplicateEdge, SelfLoop


class TreeNetwork:
    """Validated tree on nodes 0..L-1 with directed-edge index arrays."""

    def __init__(self, node_count, edges):
        self.node_count = node_count
        self.edges = tuple(edges)
        nbr = [[] for _ in range(node_count)]
        for u, v in self.edges:
            nbr[u].append(v)
            nbr[v].append(u)
        self.neighbors = tuple(tuple(sorted(n)) for n in nbr)
        self.degree = np.array([len(n) for n in self.neighbors], dtype=int)
        # directed edges: index e carries the message src[e] -> dst[e]
        src, dst = [], []
        for u, v in self.edges:
            src += [u, v]
            dst += [v, u]
        self.src = np.array(src, dtype=int)
        self.dst = np.array(dst, dtype=int)
        # rev[e] = index of the opposite direction of edge e
        rev = np.arange(len(src))
        rev[0::2] += 1
        rev[1::2] -= 1
        self.rev = rev
        self.diameter = self._diameter()

    @property
    def directed_count(self):
        return len(self.src)

    def _bfs_far(self, start):
        dist = np.full(self.node_count, -1, dtype=int)
        dist[start] = 0
        queue = [start]
        for u in queue:
            for v in self.neighbors[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        far = int(np.argmax(dist))
        return far, int(dist[far])

    def _diameter(self):
        if self.node_count == 1:
            return 0
        a, _ = self._bfs_far(0)
        _, d = self._bfs_far(a)
        return d


def validate_tree(node_count, edges):
    """Check that (node_count, edges) is a tree and build a TreeNetwork.

    Raises SelfLoop, DuplicateEdge, CycleDetected, or Disconnected, checked
    in that order per edge (connectivity last).
    """
    if node_count < 1:
        raise ValueError(f"node_count must be >= 1, got {node_count}")
    parent = list(range(node_count))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    seen = set()
    normalized = []
    for u, v in edges:
        u, v = int(u), int(v)
        if not (0 <= u < node_count and 0 <= v < node_count):
            raise ValueError(f"edge ({u}, {v}) out of range for {node_count} nodes")
        if u == v:
            raise SelfLoop(u)
        key = (min(u, v), max(u, v))
        if key in seen:
            raise DuplicateEdge(u, v)
        seen.add(key)
        ru, rv = find(u), find(v)
        if ru == rv:
            raise CycleDetected(u, v)
        parent[ru] = rv
        normalized.append(key)
    root = find(0)
    for node in range(node_count):
        if find(node) != root:
            raise Disconnected(node)
    return TreeNetwork(node_count, normalized)


def chain(length):
    """Linear chain 0-1-...-(length-1)."""
    return validate_tree(length, [(i, i + 1) for i in range(length - 1)])


def tree8():
    """The 8-node binary-style tree used in the clip experiments."""
    return validate_tree(
        8, [(0, 1), (1, 2), (1, 3), (3, 4), (3, 5), (5, 6), (5, 7)])


def random_tree(node_count, seed):
    """Uniform random labelled tree via Prufer decoding."""
    if node_count < 2:
        return validate_tree(node_count, [])
    rng = np.random.default_rng(seed)
    code = rng.integers(0, node_count, size=node_count - 2)
    degree = np.ones(node_count, dtype=int)
    for c in code:
        degree[c] += 1
    leaves = [i for i in range(node_count) if degree[i] == 1]
    heapq.heapify(leaves)
    edges = []
    for c in code:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, int(c)))
        degree[c] -= 1
        if degree[c] == 1:
            heapq.heappush(leaves, int(c))
    u = heapq.heappop(leaves)
    v = heapq.heappop(leaves)
    edges.append((u, v))
    return validate_tree(node_count, edges)


def load_topology(source):
    """Build a TreeNetwork from a JSON file path or an already-parsed dict.

    Expected shape: {"node_count": L, "edges": [[u, v], ...]}.
    """
    if isinstance(source, dict):
        doc = source
    else:
        with open(source) as fh:
            doc = json.load(fh)
    return validate_tree(int(doc["node_count"]),
                         [tuple(e) for e in doc["edges"]])


class EdgeStore:
    """Per-directed-edge payloads, zero-initialized, with the previous round
    kept for warm starts across consensus events."""

    def __init__(self, net, shape=(), dtype=float):
        full = (net.directed_count,) + tuple(shape)
        self.values = np.zeros(full, dtype=dtype)
        self.previous = np.zeros(full, dtype=dtype)

    def copy(self):
        out = object.__new__(EdgeStore)
        out.values = self.values.copy()
        out.previous = self.previous.copy()
        return out


def cp_sweep(net, local, store):
    """One synchronous consensus sweep.

    new[l -> l'] = local[l] + sum of old incoming at l except from l'.
    All new messages are computed from the previous round (Jacobi style).
    """
    local = np.asarray(local, dtype=float)
    old = store.values
    incoming = np.zeros((net.node_count,) + old.shape[1:])
    np.add.at(incoming, net.dst, old)
    store.previous = old
    store.values = local[net.src] + incoming[net.src] - old[net.rev]
    return store


def cp_aggregate(net, store):
    """Sum of incoming messages at each node."""
    out = np.zeros((net.node_count,) + store.values.shape[1:])
    np.add.at(out, net.dst, store.values)
    return out
