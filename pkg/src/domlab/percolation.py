"""Bernoulli percolation, the boundary-cluster proxy for infinite clusters,
cutset enumeration and the exact cutset conditional law.

Configurations are plain integer bitmasks over graph vertices (site mode)
or over the sorted edge list (bond mode).  "Connected to infinity" always
means connected to the graph's designated boundary set.
"""

from __future__ import annotations

import collections
import math
from dataclasses import dataclass

import numpy as np

from .errors import CapExceeded, ZeroMassError
from .domination import SiteMeasure
from .graph import Graph, boundaries, connected_subsets_containing

PROXY_LAW_CAP = 20


@dataclass(frozen=True)
class PercConfig:
    """One percolation configuration; ``open_mask`` bit i is site i (site
    mode) or the i-th edge of graph.edges() (bond mode)."""

    mode: str
    open_mask: int

    def __post_init__(self):
        if self.mode not in ("site", "bond"):
            raise ValueError("mode must be 'site' or 'bond'")

    def is_open(self, i: int) -> bool:
        return bool(self.open_mask >> i & 1)


def perc_sample(g: Graph, p: float, mode: str = "site", seed: int = 0) -> PercConfig:
    """I.i.d. openings with probability p, deterministic given the seed."""
    count = g.n if mode == "site" else g.edge_count()
    rng = np.random.default_rng(seed)
    bits = rng.random(count) < p
    mask = 0
    for i in range(count):
        if bits[i]:
            mask |= 1 << i
    return PercConfig(mode, mask)


def _boundary_reachable_sites(g: Graph, open_mask: int, avoid: frozenset[int] = frozenset()) -> int:
    """Mask of open sites whose open cluster (within V minus avoid) meets
    the boundary set."""
    seen = 0
    queue = collections.deque()
    for v in g.boundary:
        if v not in avoid and open_mask >> v & 1 and not seen >> v & 1:
            seen |= 1 << v
            queue.append(v)
    while queue:
        u = queue.popleft()
        for w in g.neighbors[u]:
            if w not in avoid and open_mask >> w & 1 and not seen >> w & 1:
                seen |= 1 << w
                queue.append(w)
    return seen


def infinite_proxy(g: Graph, omega: PercConfig) -> int:
    """Sites in "infinite" clusters: open clusters that hit the boundary set.

    Site mode: a site is kept iff it is open and its open cluster meets the
    boundary.  Bond mode: a site is kept iff its open-edge component
    contains a boundary vertex.
    """
    if not g.boundary:
        raise ValueError("infinite_proxy needs a nonempty boundary set")
    if omega.mode == "site":
        return _boundary_reachable_sites(g, omega.open_mask)
    edges = g.edges()
    parent = list(range(g.n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, (u, v) in enumerate(edges):
        if omega.open_mask >> i & 1:
            parent[find(u)] = find(v)
    infinite_roots = {find(v) for v in g.boundary}
    mask = 0
    for v in range(g.n):
        if find(v) in infinite_roots:
            mask |= 1 << v
    return mask


def infinite_proxy_law(g: Graph, p: float, cap: int = PROXY_LAW_CAP) -> SiteMeasure:
    """Exact law of the boundary-cluster process under site percolation,
    by enumerating all 2^n configurations."""
    if g.n > cap:
        raise CapExceeded(f"infinite_proxy_law: {g.n} sites exceeds cap {cap}")
    probs = np.zeros(1 << g.n)
    for w in range(1 << g.n):
        o = bin(w).count("1")
        weight = (p**o) * ((1 - p) ** (g.n - o))
        probs[infinite_proxy(g, PercConfig("site", w))] += weight
    with np.errstate(divide="ignore"):
        return SiteMeasure(g, tuple(range(g.n)), np.log(probs))


def tilde_x(g: Graph, omega: PercConfig, r: int) -> int:
    """Locally-certified variant of the boundary-cluster process.

    A vertex v is kept iff its whole radius-r ball is open and every vertex
    on the ball's external boundary either lies in a component of the
    ball's complement that misses the boundary set, or reaches the boundary
    set by an open path avoiding the ball.
    """
    if omega.mode != "site":
        raise ValueError("tilde_x is defined for site configurations")
    if r < 0:
        raise ValueError("r must be nonnegative")
    out = 0
    for v in range(g.n):
        ball = g.ball(v, r)
        ball_mask = 0
        for u in ball:
            ball_mask |= 1 << u
        if (omega.open_mask & ball_mask) != ball_mask:
            continue
        outside = [u for u in range(g.n) if u not in ball]
        comps = g.components(outside)
        reach = _boundary_reachable_sites(g, omega.open_mask, avoid=ball)
        ok = True
        ext_boundary = {
            u for w in ball for u in g.neighbors[w] if u not in ball
        }
        for u in ext_boundary:
            comp = next(c for c in comps if u in c)
            if comp & g.boundary and not reach >> u & 1:
                ok = False
                break
        if ok:
            out |= 1 << v
    return out


# -- cutsets -------------------------------------------------------------------


@dataclass(frozen=True)
class Cutset:
    """Minimal vertex set separating a pivot from the boundary set."""

    vertices: frozenset[int]
    interior: frozenset[int]
    exterior: frozenset[int]


def _separates(g: Graph, pivot: int, blocked: frozenset[int]) -> bool:
    if pivot in blocked:
        return True
    seen = {pivot}
    queue = collections.deque([pivot])
    while queue:
        u = queue.popleft()
        if u in g.boundary:
            return False
        for w in g.neighbors[u]:
            if w not in blocked and w not in seen:
                seen.add(w)
                queue.append(w)
    return True


def cutsets(g: Graph, pivot: int, max_interior: int, cap: int = 100_000) -> list[Cutset]:
    """All minimal cutsets separating the pivot from the boundary set whose
    interior has at most max_interior vertices.

    Enumerated as external boundaries of connected pivot-containing sets
    (plus the trivial cutset {pivot}), then filtered for minimality by
    single-vertex removal; a cutset is inclusion-minimal iff no single
    vertex can be dropped, since separation is monotone under inclusion.
    """
    if pivot in g.boundary:
        raise ValueError("pivot must not be a boundary vertex")
    if not g.boundary:
        raise ValueError("graph has no boundary to separate from")
    all_v = frozenset(range(g.n))
    out = [Cutset(frozenset({pivot}), frozenset(), all_v - {pivot})]
    interiors = connected_subsets_containing(
        g, pivot, within=all_v - g.boundary, max_size=max_interior, cap=cap
    )
    for s in interiors:
        pi, _, _ = boundaries(g, s)
        if not pi:
            continue
        if not _separates(g, pivot, pi):
            continue
        if any(_separates(g, pivot, pi - {u}) for u in pi):
            continue  # not minimal
        interior = s
        exterior = all_v - pi - interior
        out.append(Cutset(pi, interior, exterior))
    out.sort(key=lambda c: (len(c.interior), tuple(sorted(c.vertices))))
    return out


def cutset_conditional_law(
    g: Graph,
    cutset: Cutset,
    z: int,
    omega_rest: PercConfig,
    p: float,
    q: float,
) -> np.ndarray:
    """Exact conditional law of the openings on the cutset given the diluted
    boundary-cluster observation z and the configuration off the cutset.

    Entry eps (bitmask over sorted(cutset.vertices)) is proportional to
    p^o(eps) (1-p)^c(eps) (1-q)^|V(eps)| on the event that z stays
    consistent, where V(eps) is the set of vertices that are not
    boundary-connected off the cutset but become boundary-connected once
    the cutset opens as eps.  Inconsistent z raises ZeroMassError.
    """
    if omega_rest.mode != "site":
        raise ValueError("cutset_conditional_law works in site mode")
    pi = sorted(cutset.vertices)
    m = len(pi)
    pi_mask = 0
    for v in pi:
        pi_mask |= 1 << v
    rest = omega_rest.open_mask & ~pi_mask
    base_reach = _boundary_reachable_sites(g, rest, avoid=cutset.vertices)
    base_count = bin(base_reach).count("1")
    weights = np.zeros(1 << m)
    for eps in range(1 << m):
        full = rest
        for j in range(m):
            if eps >> j & 1:
                full |= 1 << pi[j]
        x_full = infinite_proxy(g, PercConfig("site", full))
        if z & ~x_full:
            continue  # some observed one is impossible under this opening
        o = bin(eps).count("1")
        c = m - o
        grown = bin(x_full).count("1") - base_count
        weights[eps] = (p**o) * ((1 - p) ** c) * ((1 - q) ** grown)
    total = weights.sum()
    if total <= 0.0:
        raise ZeroMassError("observation z is inconsistent with the rest")
    return weights / total


# -- closed-form bound report ----------------------------------------------------


@dataclass(frozen=True)
class PercBounds:
    """Peierls-series and upper-bound report for the boundary-cluster process."""

    kappa: float
    series_value: float | None  # None when the series diverges
    upper: float
    hole_tail: tuple[float, ...]
    hole_ratio: float


def perc_bounds(delta: int, h: float, p: float, q: float, k_max: int = 12) -> PercBounds:
    """Closed-form report: the cutset-sum exponent kappa = 2 log Delta -
    (Delta+1) log(1-q) + (h/2) log(1-p) and its geometric sum when
    convergent; the domination upper bound 1 - (1-p)^h; and the hole-size
    tail sums over Delta^{2i} (1-p)^{i h / Delta}."""
    log1p_p = math.log1p(-p) if p < 1.0 else -math.inf
    log1p_q = math.log1p(-q) if q < 1.0 else -math.inf
    kappa = 2.0 * math.log(delta) - (delta + 1) * log1p_q + 0.5 * h * log1p_p
    if kappa < 0:
        ek = math.exp(kappa)
        series = ek / (1.0 - ek)
    else:
        series = None
    upper = 1.0 - math.exp(h * log1p_p) if h * log1p_p > -math.inf else 1.0
    if h == 0:
        upper = 0.0
    ratio = (delta**2) * math.exp(h / delta * log1p_p)
    tail = tuple(
        (ratio**k) / (1.0 - ratio) if ratio < 1.0 else math.inf
        for k in range(1, k_max + 1)
    )
    return PercBounds(kappa, series, upper, tail, ratio)
