"""Interaction network construction.

Networks are immutable after construction and stored in CSR form
(``offsets``/``neighbors``) so the exchange kernels can sample a uniform
neighbor by index. All constructors validate symmetry and connectivity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Network",
    "NetworkError",
    "GenerationFailure",
    "make_ring",
    "make_square_lattice",
    "make_erdos_renyi",
    "make_complete",
    "write_edge_list",
    "read_edge_list",
]

# Consecutive disconnected Erdos-Renyi draws tolerated before giving up.
MAX_ER_ATTEMPTS = 10_000


class NetworkError(ValueError):
    """Invalid size or parameter for a network constructor."""


class GenerationFailure(RuntimeError):
    """Random-graph generation kept producing disconnected graphs."""


@dataclass(frozen=True)
class Network:
    """Undirected graph over ``n`` agents, adjacency in CSR form.

    ``neighbors[offsets[i]:offsets[i+1]]`` is the sorted neighbor list of
    agent ``i``.
    """

    n: int
    offsets: np.ndarray  # int64, shape (n+1,)
    neighbors: np.ndarray  # int64, shape (n_edges*2,)
    topology: str
    gamma: float | None = field(default=None)

    def __post_init__(self):
        self.offsets.setflags(write=False)
        self.neighbors.setflags(write=False)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def n_edges(self) -> int:
        return self.neighbors.size // 2

    @property
    def mean_degree(self) -> float:
        return self.neighbors.size / self.n

    @property
    def link_density(self) -> float:
        """Mean degree over (n-1); equals 1 for the complete graph."""
        return self.mean_degree / (self.n - 1)

    def neighbors_of(self, i: int) -> np.ndarray:
        return self.neighbors[self.offsets[i]:self.offsets[i + 1]]


def _from_edges(n: int, edges: np.ndarray, topology: str,
                gamma: float | None = None) -> Network:
    """Build a validated Network from an (m, 2) array of undirected edges."""
    if edges.size:
        both = np.concatenate([edges, edges[:, ::-1]])
    else:
        both = np.empty((0, 2), dtype=np.int64)
    order = np.lexsort((both[:, 1], both[:, 0]))
    both = both[order]
    counts = np.bincount(both[:, 0], minlength=n)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    net = Network(n=n, offsets=offsets,
                  neighbors=np.ascontiguousarray(both[:, 1], dtype=np.int64),
                  topology=topology, gamma=gamma)
    _validate(net)
    return net


def _validate(net: Network) -> None:
    n = net.n
    for i in range(n):
        nbrs = net.neighbors_of(i)
        if nbrs.size and (np.any(np.diff(nbrs) <= 0)):
            raise NetworkError(f"duplicate or unsorted neighbors at node {i}")
        if np.any(nbrs == i):
            raise NetworkError(f"self-loop at node {i}")
    # symmetry: the edge multiset must equal its transpose
    src = np.repeat(np.arange(n), net.degrees)
    fwd = set(zip(src.tolist(), net.neighbors.tolist()))
    if any((j, i) not in fwd for i, j in fwd):
        raise NetworkError("adjacency is not symmetric")
    if not is_connected(net):
        raise NetworkError("graph is not connected")


def is_connected(net: Network) -> bool:
    """Breadth-first reachability of every node from node 0."""
    return _reachable_from_zero(net.n, net.offsets, net.neighbors) == net.n


def _reachable_from_zero(n: int, offsets: np.ndarray,
                         neighbors: np.ndarray) -> int:
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    frontier = [0]
    count = 1
    while frontier:
        nxt = []
        for u in frontier:
            for v in neighbors[offsets[u]:offsets[u + 1]]:
                if not seen[v]:
                    seen[v] = True
                    count += 1
                    nxt.append(int(v))
        frontier = nxt
    return count


def make_ring(n: int) -> Network:
    """Periodic 1d chain: neighbors of i are (i-1) mod n and (i+1) mod n."""
    if n < 3:
        raise NetworkError(f"ring needs n >= 3, got {n}")
    i = np.arange(n, dtype=np.int64)
    edges = np.stack([i, (i + 1) % n], axis=1)
    return _from_edges(n, edges, "ring", gamma=2.0)


def make_square_lattice(side: int) -> Network:
    """Periodic square lattice, node (x, y) -> index x*side + y, degree 4."""
    if side < 3:
        raise NetworkError(f"square lattice needs side >= 3, got {side}")
    x, y = np.meshgrid(np.arange(side, dtype=np.int64),
                       np.arange(side, dtype=np.int64), indexing="ij")
    idx = (x * side + y).ravel()
    right = (x * side + (y + 1) % side).ravel()
    down = (((x + 1) % side) * side + y).ravel()
    edges = np.concatenate([np.stack([idx, right], axis=1),
                            np.stack([idx, down], axis=1)])
    return _from_edges(side * side, edges, "lattice2d", gamma=4.0)


def make_complete(n: int) -> Network:
    """Complete graph (full-mixture limit)."""
    if n < 2:
        raise NetworkError(f"complete graph needs n >= 2, got {n}")
    iu = np.triu_indices(n, k=1)
    edges = np.stack([iu[0], iu[1]], axis=1).astype(np.int64)
    return _from_edges(n, edges, "complete", gamma=float(n - 1))


def make_erdos_renyi(n: int, gamma: float, seed: int) -> Network:
    """G(N, p) random graph with link probability gamma/(n-1).

    Disconnected draws are discarded and the whole graph regenerated from
    the next sub-seed, so the degree distribution is G(N, p) conditioned
    on connectivity. ``gamma = n-1`` returns the complete graph.
    """
    if n < 2:
        raise NetworkError(f"random graph needs n >= 2, got {n}")
    if not (0 < gamma <= n - 1):
        raise NetworkError(f"gamma must be in (0, {n - 1}], got {gamma}")
    if gamma == n - 1:
        net = make_complete(n)
        return Network(n=net.n, offsets=net.offsets, neighbors=net.neighbors,
                       topology="erdos_renyi", gamma=float(gamma))
    p_link = gamma / (n - 1)
    iu = np.triu_indices(n, k=1)
    ss = np.random.SeedSequence(seed)
    for attempt_ss in ss.spawn(MAX_ER_ATTEMPTS):
        rng = np.random.default_rng(attempt_ss)
        mask = rng.random(iu[0].size) < p_link
        edges = np.stack([iu[0][mask], iu[1][mask]], axis=1).astype(np.int64)
        try:
            return _from_edges(n, edges, "erdos_renyi", gamma=float(gamma))
        except NetworkError:
            continue
    raise GenerationFailure(
        f"no connected G({n}, {p_link:.4g}) draw in {MAX_ER_ATTEMPTS} attempts; "
        f"gamma={gamma} is likely below the connectivity threshold")


def write_edge_list(net: Network, path) -> None:
    """Write edges as '"i j"' lines, 0-indexed, i < j."""
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(net.n):
            for j in net.neighbors_of(i):
                if i < j:
                    fh.write(f"{i} {j}\n")


def read_edge_list(path, n: int, topology: str = "imported") -> Network:
    """Read an edge-list file written by :func:`write_edge_list`."""
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            i, j = map(int, line.split())
            pairs.append((i, j))
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return _from_edges(n, edges, topology)
