"""Finite simple graphs with a designated boundary vertex set.

The boundary set is the finite stand-in for "infinity": a vertex counts as
connected to infinity when its cluster reaches the boundary set.  Generators
below build the standard example families (balls in regular trees, grid
boxes, power graphs, trees with dangling paths).

Vertices are dense integers ``0..n-1`` and neighbor lists are kept sorted,
so every traversal below is deterministic.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator

from .errors import CapExceeded

DEFAULT_VERTEX_CAP = 200_000
DEFAULT_SUBSET_CAP = 100_000
CHEEGER_CAP = 20


@dataclass(frozen=True)
class Graph:
    """Immutable simple graph on vertices 0..n-1 with a boundary set."""

    n: int
    neighbors: tuple[tuple[int, ...], ...]
    boundary: frozenset[int] = frozenset()
    _masks: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.neighbors) != self.n:
            raise ValueError("neighbor table length does not match n")
        for v, nbrs in enumerate(self.neighbors):
            if v in nbrs:
                raise ValueError(f"loop at vertex {v}")
            if len(set(nbrs)) != len(nbrs):
                raise ValueError(f"multi-edge at vertex {v}")
            for u in nbrs:
                if not 0 <= u < self.n:
                    raise ValueError(f"neighbor {u} out of range")
                if v not in self.neighbors[u]:
                    raise ValueError(f"adjacency not symmetric at ({v},{u})")
        if not self.boundary <= set(range(self.n)):
            raise ValueError("boundary contains non-vertices")
        masks = tuple(sum(1 << u for u in nbrs) for nbrs in self.neighbors)
        object.__setattr__(self, "_masks", masks)

    # -- basic queries ----------------------------------------------------

    def degree(self, v: int) -> int:
        return len(self.neighbors[v])

    @property
    def max_degree(self) -> int:
        return max((len(nb) for nb in self.neighbors), default=0)

    @property
    def interior(self) -> frozenset[int]:
        return frozenset(range(self.n)) - self.boundary

    def neighbor_mask(self, v: int) -> int:
        return self._masks[v]

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.n) for v in self.neighbors[u] if u < v]

    def edge_count(self) -> int:
        return sum(len(nb) for nb in self.neighbors) // 2

    def distances_from(self, v: int) -> list[int]:
        """BFS distances; unreachable vertices get -1."""
        dist = [-1] * self.n
        dist[v] = 0
        queue = collections.deque([v])
        while queue:
            u = queue.popleft()
            for w in self.neighbors[u]:
                if dist[w] < 0:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        return dist

    def dist(self, u: int, v: int) -> int:
        return self.distances_from(u)[v]

    def ball(self, v: int, r: int) -> frozenset[int]:
        dist = self.distances_from(v)
        return frozenset(u for u in range(self.n) if 0 <= dist[u] <= r)

    def is_connected_set(self, s: Iterable[int]) -> bool:
        s = set(s)
        if not s:
            return True
        start = next(iter(s))
        seen = {start}
        queue = collections.deque([start])
        while queue:
            u = queue.popleft()
            for w in self.neighbors[u]:
                if w in s and w not in seen:
                    seen.add(w)
                    queue.append(w)
        return seen == s

    def components(self, s: Iterable[int]) -> list[frozenset[int]]:
        """Connected components of the induced subgraph on ``s``, in
        deterministic order (sorted by minimum vertex)."""
        s = set(s)
        out = []
        while s:
            start = min(s)
            comp = {start}
            queue = collections.deque([start])
            while queue:
                u = queue.popleft()
                for w in self.neighbors[u]:
                    if w in s and w not in comp:
                        comp.add(w)
                        queue.append(w)
            s -= comp
            out.append(frozenset(comp))
        return sorted(out, key=min)


# -- generators -----------------------------------------------------------


def _check_cap(count: int, cap: int, what: str):
    if count > cap:
        raise CapExceeded(f"{what}: {count} vertices exceeds cap {cap}")


def tree_ball(degree: int, radius: int, cap: int = DEFAULT_VERTEX_CAP) -> Graph:
    """Ball of the given radius in the degree-regular tree.

    Leaves at distance exactly ``radius`` form the boundary set.  The radius-0
    ball is a single vertex which is its own boundary.
    """
    if degree < 3:
        raise ValueError("tree degree must be at least 3")
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if radius == 0:
        return Graph(1, ((),), frozenset({0}))
    count = 1 + degree * ((degree - 1) ** radius - 1) // (degree - 2)
    _check_cap(count, cap, "tree_ball")
    nbrs: list[list[int]] = [[]]
    layer = [0]
    next_id = 1
    for depth in range(1, radius + 1):
        new_layer = []
        for parent in layer:
            n_children = degree if depth == 1 else degree - 1
            for _ in range(n_children):
                nbrs.append([parent])
                nbrs[parent].append(next_id)
                new_layer.append(next_id)
                next_id += 1
        layer = new_layer
    return Graph(next_id, tuple(tuple(sorted(a)) for a in nbrs), frozenset(layer))


def grid_box(dim: int, side: int, cap: int = DEFAULT_VERTEX_CAP) -> Graph:
    """Box {0..side-1}^dim with nearest-neighbor edges; faces are boundary."""
    if dim < 1 or side < 1:
        raise ValueError("dim and side must be positive")
    count = side**dim
    _check_cap(count, cap, "grid_box")

    def coords(i):
        out = []
        for _ in range(dim):
            out.append(i % side)
            i //= side
        return out

    def index(cs):
        i = 0
        for c in reversed(cs):
            i = i * side + c
        return i

    nbrs = [[] for _ in range(count)]
    boundary = set()
    for i in range(count):
        cs = coords(i)
        if any(c in (0, side - 1) for c in cs):
            boundary.add(i)
        for d in range(dim):
            if cs[d] + 1 < side:
                cs[d] += 1
                j = index(cs)
                cs[d] -= 1
                nbrs[i].append(j)
                nbrs[j].append(i)
    return Graph(count, tuple(tuple(sorted(a)) for a in nbrs), frozenset(boundary))


def power_graph(g: Graph, k: int) -> Graph:
    """Same vertices; u~v iff their distance in g is between 1 and k."""
    if g.n == 0:
        raise ValueError("power_graph of empty graph")
    if k < 1:
        raise ValueError("power must be >= 1")
    nbrs: list[tuple[int, ...]] = []
    for v in range(g.n):
        dist = g.distances_from(v)
        nbrs.append(tuple(sorted(u for u in range(g.n) if 1 <= dist[u] <= k)))
    return Graph(g.n, tuple(nbrs), g.boundary)


def tree_with_paths(
    degree: int,
    path_len: int,
    radius: int,
    paths_to_boundary: bool = False,
    cap: int = DEFAULT_VERTEX_CAP,
) -> Graph:
    """Tree ball with a dangling path of ``path_len`` vertices hung from
    every non-boundary vertex.

    The dangling leaves join the boundary set only when ``paths_to_boundary``
    is set.
    """
    base = tree_ball(degree, radius, cap=cap)
    interior = sorted(base.interior)
    count = base.n + path_len * len(interior)
    _check_cap(count, cap, "tree_with_paths")
    nbrs = [list(a) for a in base.neighbors]
    boundary = set(base.boundary)
    next_id = base.n
    for v in interior:
        prev = v
        for step in range(path_len):
            nbrs.append([prev])
            nbrs[prev].append(next_id)
            if paths_to_boundary and step == path_len - 1:
                boundary.add(next_id)
            prev = next_id
            next_id += 1
    return Graph(next_id, tuple(tuple(sorted(a)) for a in nbrs), frozenset(boundary))


def line_graph(g: Graph) -> Graph:
    """Line graph of g: one vertex per edge, adjacency = sharing an endpoint.

    Bond percolation on g is site percolation on line_graph(g).  An edge
    becomes a boundary vertex when it touches the boundary set of g.
    """
    edges = g.edges()
    index = {e: i for i, e in enumerate(edges)}
    nbrs = [set() for _ in edges]
    for v in range(g.n):
        incident = [index[(min(v, u), max(v, u))] for u in g.neighbors[v]]
        for a in incident:
            for b in incident:
                if a != b:
                    nbrs[a].add(b)
    boundary = frozenset(
        i for i, (u, v) in enumerate(edges) if u in g.boundary or v in g.boundary
    )
    return Graph(len(edges), tuple(tuple(sorted(a)) for a in nbrs), boundary)


# -- boundary and isoperimetry ---------------------------------------------


def boundaries(g: Graph, s: Iterable[int]) -> tuple[frozenset[int], int, frozenset[int]]:
    """External vertex boundary, edge boundary size, internal boundary of s."""
    s = frozenset(s)
    if not s:
        raise ValueError("boundaries of the empty set are not defined")
    external = set()
    internal = set()
    edge_count = 0
    for v in s:
        for u in g.neighbors[v]:
            if u not in s:
                external.add(u)
                internal.add(v)
                edge_count += 1
    return frozenset(external), edge_count, frozenset(internal)


@dataclass(frozen=True)
class CheegerResult:
    """Exact vertex and edge isoperimetric minima with witnessing sets."""

    vertex: Fraction
    edge: Fraction
    vertex_argmin: frozenset[int]
    edge_argmin: frozenset[int]


def cheeger(g: Graph, exclude_boundary: bool = False, cap: int = CHEEGER_CAP) -> CheegerResult:
    """Exact min of |dS|/|S| and |d_e S|/|S| over eligible nonempty S.

    With ``exclude_boundary`` the minimum runs over subsets of the interior
    only, a finite stand-in for the isoperimetry of the infinite graph the
    ball was cut from.  Without it, S = V gives 0 on any finite graph.
    Exhaustive over all 2^k - 1 subsets, so k is capped.
    """
    eligible = sorted(g.interior) if exclude_boundary else list(range(g.n))
    k = len(eligible)
    if k == 0:
        raise ValueError("no eligible vertices for cheeger")
    if k > cap:
        raise CapExceeded(f"cheeger: {k} eligible vertices exceeds cap {cap}")
    masks = g._masks
    pos_of = {v: i for i, v in enumerate(eligible)}
    best_v: tuple[Fraction, frozenset] | None = None
    best_e: tuple[Fraction, frozenset] | None = None
    for bits in range(1, 1 << k):
        members = [eligible[i] for i in range(k) if bits >> i & 1]
        smask = 0
        for v in members:
            smask |= 1 << v
        size = len(members)
        nbr_union = 0
        ecount = 0
        for v in members:
            m = masks[v]
            nbr_union |= m
            ecount += (m & ~smask).bit_count()
        vcount = (nbr_union & ~smask).bit_count()
        rv = Fraction(vcount, size)
        re = Fraction(ecount, size)
        if best_v is None or rv < best_v[0]:
            best_v = (rv, frozenset(members))
        if best_e is None or re < best_e[0]:
            best_e = (re, frozenset(members))
    return CheegerResult(best_v[0], best_e[0], best_v[1], best_e[1])


# -- connected subset enumeration ------------------------------------------


def _grow_connected(
    g: Graph,
    allowed: frozenset[int],
    start: int,
    max_size: int,
    out: list[frozenset[int]],
    cap: int,
):
    """Emit every connected S with start in S, S subset of allowed, |S| <= max_size.

    A vertex skipped at a branch point is banned for all later branches of
    that level and their descendants, which makes every set appear once.
    """

    def rec(current: set[int], forbidden: set[int]):
        if len(out) >= cap:
            raise CapExceeded(f"connected subset enumeration exceeded cap {cap}")
        out.append(frozenset(current))
        if len(current) >= max_size:
            return
        ext = sorted(
            u
            for v in current
            for u in g.neighbors[v]
            if u in allowed and u not in current and u not in forbidden
        )
        ext = sorted(set(ext))
        banned: set[int] = set()
        for v in ext:
            current.add(v)
            rec(current, forbidden | banned)
            current.remove(v)
            banned.add(v)

    rec({start}, set())


def connected_subsets(
    g: Graph,
    within: Iterable[int] | None = None,
    max_size: int | None = None,
    cap: int = DEFAULT_SUBSET_CAP,
) -> list[frozenset[int]]:
    """Every connected S inside ``within`` with 1 <= |S| <= max_size.

    Each set appears exactly once; output is sorted by (size, sorted tuple)
    so repeated runs agree.  Sets are enumerated rooted at their minimum
    vertex, using only larger-indexed vertices beyond the root.
    """
    allowed = sorted(within) if within is not None else list(range(g.n))
    if max_size is None:
        max_size = len(allowed)
    out: list[frozenset[int]] = []
    for root in allowed:
        above = frozenset(v for v in allowed if v > root)
        _grow_connected(g, above | {root}, root, max_size, out, cap)
    out.sort(key=lambda s: (len(s), tuple(sorted(s))))
    return out


def connected_subsets_containing(
    g: Graph,
    root: int,
    within: Iterable[int] | None = None,
    max_size: int | None = None,
    cap: int = DEFAULT_SUBSET_CAP,
) -> list[frozenset[int]]:
    """Connected subsets that contain ``root``, same guarantees as above."""
    allowed = frozenset(within) if within is not None else frozenset(range(g.n))
    if root not in allowed:
        return []
    if max_size is None:
        max_size = len(allowed)
    out: list[frozenset[int]] = []
    _grow_connected(g, allowed, root, max_size, out, cap)
    out.sort(key=lambda s: (len(s), tuple(sorted(s))))
    return out


# -- serialization ----------------------------------------------------------


def dump_graph(g: Graph) -> str:
    """Plain-text edge list: 'n <count>', 'e <u> <v>' lines, 'b <v>' lines."""
    lines = [f"n {g.n}"]
    lines += [f"e {u} {v}" for u, v in g.edges()]
    lines += [f"b {v}" for v in sorted(g.boundary)]
    return "\n".join(lines) + "\n"


def load_graph(text: str) -> Graph:
    n = None
    edges = []
    boundary = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "n" and len(parts) == 2:
            n = int(parts[1])
        elif parts[0] == "e" and len(parts) == 3:
            edges.append((int(parts[1]), int(parts[2])))
        elif parts[0] == "b" and len(parts) == 2:
            boundary.add(int(parts[1]))
        else:
            raise ValueError(f"bad graph line {lineno}: {raw!r}")
    if n is None:
        raise ValueError("missing 'n <count>' header")
    nbrs = [set() for _ in range(n)]
    for u, v in edges:
        nbrs[u].add(v)
        nbrs[v].add(u)
    return Graph(n, tuple(tuple(sorted(a)) for a in nbrs), frozenset(boundary))


def path_graph(n: int, boundary: Iterable[int] = ()) -> Graph:
    nbrs = tuple(
        tuple(sorted(u for u in (i - 1, i + 1) if 0 <= u < n)) for i in range(n)
    )
    return Graph(n, nbrs, frozenset(boundary))


def cycle_graph(n: int, boundary: Iterable[int] = ()) -> Graph:
    nbrs = tuple(tuple(sorted({(i - 1) % n, (i + 1) % n})) for i in range(n))
    return Graph(n, nbrs, frozenset(boundary))


def complete_graph(n: int, boundary: Iterable[int] = ()) -> Graph:
    nbrs = tuple(tuple(u for u in range(n) if u != i) for i in range(n))
    return Graph(n, nbrs, frozenset(boundary))


def star_graph(leaves: int, boundary: Iterable[int] = ()) -> Graph:
    nbrs = [tuple(range(1, leaves + 1))] + [(0,)] * leaves
    return Graph(leaves + 1, tuple(nbrs), frozenset(boundary))
