"""Exact measures on {0,1}^Lambda and stochastic-domination machinery.

A SiteMeasure stores log-weights indexed by bit-packed configurations, so
everything here is exact enumeration: worst-case single-site conditionals,
Strassen domination via max-flow over the configuration lattice, the
conditional-comparison (Holley-type) order, tilted measures, independent
dilution and its conditional law, and monotone couplings.

All conditional computations stay in the log domain; a conditioning event
has positive probability iff its log-mass is finite, so deep-in-the-tail
events are never lost to underflow.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow
from scipy.special import logsumexp

from .errors import CapExceeded, ConsistencyError, HolleyViolation, ZeroMassError
from .graph import Graph

STRASSEN_CAP = 14
HOLLEY_CAP = 10
TILT_PAIRS_CAP = 8
DECOUPLE_CAP = 12

# scipy's max-flow stores capacities in int32 internally; 2^30 is the
# largest safe power-of-two mass scale
_FLOW_SCALE = 1 << 30


# -- the measure type -------------------------------------------------------


@dataclass
class SiteMeasure:
    """Exact distribution on {0,1}^sites, log-weights indexed by bitmask.

    Bit j of a configuration corresponds to ``sites[j]``.  Weights need not
    be normalized; ``log_z`` is the log normalization.
    """

    graph: Graph
    sites: tuple[int, ...]
    log_weights: np.ndarray
    mp_log_weights: list | None = field(default=None, repr=False)

    def __post_init__(self):
        self.sites = tuple(self.sites)
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        k = len(self.sites)
        if self.log_weights.shape != (1 << k,):
            raise ValueError("log_weights must have length 2^len(sites)")
        if not np.any(np.isfinite(self.log_weights)):
            raise ValueError("measure has no configuration of positive mass")
        if len(set(self.sites)) != k:
            raise ValueError("duplicate sites")
        for v in self.sites:
            if not 0 <= v < self.graph.n:
                raise ValueError(f"site {v} not a graph vertex")

    @property
    def k(self) -> int:
        return len(self.sites)

    @property
    def log_z(self) -> float:
        return float(logsumexp(self.log_weights))

    def log_probs(self) -> np.ndarray:
        return self.log_weights - self.log_z

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs())

    def pos(self, v: int) -> int:
        return self.sites.index(v)

    def mask_of(self, vertices) -> int:
        m = 0
        for v in vertices:
            m |= 1 << self.pos(v)
        return m

    def vertices_of(self, mask: int) -> frozenset[int]:
        return frozenset(self.sites[j] for j in range(self.k) if mask >> j & 1)

    def induced_neighbors(self) -> list[list[int]]:
        """Adjacency among site positions, induced from the graph."""
        present = {v: j for j, v in enumerate(self.sites)}
        return [
            [present[u] for u in self.graph.neighbors[v] if u in present]
            for v in self.sites
        ]

    def validate(self, tol: float = 1e-12) -> None:
        total = np.exp(logsumexp(self.log_probs()))
        if abs(total - 1.0) > tol:
            raise ConsistencyError(f"normalized mass {total} != 1")

    def marginal_one(self, v: int) -> float:
        j = self.pos(v)
        lw = self.log_probs()
        sel = (np.arange(lw.size) >> j & 1).astype(bool)
        return float(np.exp(logsumexp(lw[sel])))


def bernoulli_measure(g: Graph, p: float, sites=None) -> SiteMeasure:
    """Product measure of density p on the given sites (default: all)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p outside [0,1]")
    sites = tuple(sorted(sites)) if sites is not None else tuple(range(g.n))
    k = len(sites)
    cfg = np.arange(1 << k, dtype=np.uint64)
    ones = np.bitwise_count(cfg).astype(float)
    zeros = k - ones
    with np.errstate(divide="ignore", invalid="ignore"):
        lw = np.where(ones == 0, 0.0, ones * np.log(p) if p > 0 else -np.inf)
        lw = lw + np.where(zeros == 0, 0.0, zeros * np.log1p(-p) if p < 1 else -np.inf)
    return SiteMeasure(g, sites, lw)


def measure_from_probs(g: Graph, sites, probs) -> SiteMeasure:
    probs = np.asarray(probs, dtype=float)
    with np.errstate(divide="ignore"):
        return SiteMeasure(g, tuple(sites), np.log(probs))


# -- serialization -----------------------------------------------------------


def dump_measure(mu: SiteMeasure) -> str:
    """Text form: 'm <n>' then '<config-bits> <log-weight>' per finite entry."""
    k = mu.k
    lines = [f"m {k}"]
    for cfg in range(1 << k):
        lw = mu.log_weights[cfg]
        if np.isfinite(lw):
            lines.append(f"{cfg:0{k}b} {float(lw)!r}")
    return "\n".join(lines) + "\n"


def load_measure(text: str, graph: Graph, sites=None) -> SiteMeasure:
    k = None
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "m" and len(parts) == 2:
            k = int(parts[1])
        elif len(parts) == 2:
            entries[int(parts[0], 2)] = float(parts[1])
        else:
            raise ValueError(f"bad measure line {lineno}: {raw!r}")
    if k is None:
        raise ValueError("missing 'm <n>' header")
    lw = np.full(1 << k, -np.inf)
    for cfg, val in entries.items():
        lw[cfg] = val
    sites = tuple(sites) if sites is not None else tuple(range(k))
    return SiteMeasure(graph, sites, lw)


# -- single-site conditional extremes ---------------------------------------


def _split_on_bit(lw: np.ndarray, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Weights with bit j = 0 and = 1, each indexed by the remaining bits."""
    k = int(lw.size).bit_length() - 1
    view = lw.reshape(1 << (k - 1 - j), 2, 1 << j)
    l0 = view[:, 0, :].reshape(-1)
    l1 = view[:, 1, :].reshape(-1)
    return l0, l1


def _conditional_means(l0: np.ndarray, l1: np.ndarray) -> np.ndarray:
    """P(bit=1 | rest) for each rest-config; NaN where the pair has no mass."""
    out = np.full(l0.shape, np.nan)
    both = np.isfinite(l0) & np.isfinite(l1)
    with np.errstate(over="ignore"):
        out[both] = 1.0 / (1.0 + np.exp(l0[both] - l1[both]))
    out[np.isfinite(l1) & ~np.isfinite(l0)] = 1.0
    out[np.isfinite(l0) & ~np.isfinite(l1)] = 0.0
    return out


def p_star(mu: SiteMeasure) -> float:
    """Worst-case single-site conditional probability of a one.

    Minimum over sites v and configurations x of the rest with positive
    probability of P(X_v = 1 | rest = x); zero-mass conditionings are
    skipped.  Returns 0 when some admissible conditional vanishes.
    """
    best = 1.0
    for j in range(mu.k):
        means = _conditional_means(*_split_on_bit(mu.log_weights, j))
        finite = means[~np.isnan(means)]
        if finite.size:
            best = min(best, float(finite.min()))
    return best


# -- tilting and dilution -----------------------------------------------------


def tilt(mu: SiteMeasure, A, B, p: float) -> SiteMeasure:
    """Condition on ones on A and reweight by (1-p) per one in B.

    This is the conditional law of the measure given an independent
    density-p thinning of its ones observed to be 1 on A and 0 on B.
    """
    amask = np.uint64(mu.mask_of(A))
    bmask = np.uint64(mu.mask_of(B))
    cfg = np.arange(1 << mu.k, dtype=np.uint64)
    lw = mu.log_weights.copy()
    lw[(cfg & amask) != amask] = -np.inf
    nb = np.bitwise_count(cfg & bmask).astype(float)
    if p >= 1.0:
        lw[nb > 0] = -np.inf
    elif p > 0.0:
        lw = lw + nb * np.log1p(-p)
    if not np.any(np.isfinite(lw)):
        raise ZeroMassError("tilt: conditioning event {X_A = 1} has zero mass")
    return SiteMeasure(mu.graph, mu.sites, lw - logsumexp(lw))


def dilute_law(mu: SiteMeasure, p: float) -> SiteMeasure:
    """Law of XY where Y is an independent Bernoulli(p) field: each one of
    X survives independently with probability p.

    Computed by a superset-sum transform in the log domain, n 2^n work.
    """
    k = mu.k
    if p <= 0.0:
        lw = np.full(1 << k, -np.inf)
        lw[0] = 0.0
        return SiteMeasure(mu.graph, mu.sites, lw)
    if p >= 1.0:
        return SiteMeasure(mu.graph, mu.sites, mu.log_probs())
    cfg = np.arange(1 << k, dtype=np.uint64)
    ones = np.bitwise_count(cfg).astype(float)
    g = mu.log_probs() + ones * np.log1p(-p)
    for j in range(k):
        view = g.reshape(1 << (k - 1 - j), 2, 1 << j)
        view[:, 0, :] = np.logaddexp(view[:, 0, :], view[:, 1, :])
    lw = g + ones * (np.log(p) - np.log1p(-p))
    return SiteMeasure(mu.graph, mu.sites, lw)


def _as_mask(mu: SiteMeasure, z) -> int:
    if isinstance(z, (int, np.integer)):
        return int(z)
    # mapping vertex -> bit
    m = 0
    for v, bit in dict(z).items():
        if bit:
            m |= 1 << mu.pos(v)
    return m


def conditional_given_dilution(mu: SiteMeasure, p: float, z) -> SiteMeasure:
    """Conditional law of X given that its density-p thinning equals z.

    Computed by Bayes over configurations and then asserted to coincide,
    entry for entry, with tilt(mu, ones(z), zeros(z), p); a mismatch raises
    ConsistencyError since the two routes are an identity.
    """
    zmask = _as_mask(mu, z)
    k = mu.k
    cfg = np.arange(1 << k, dtype=np.uint64)
    zarr = np.uint64(zmask)
    lw = mu.log_probs().copy()
    lw[(cfg & zarr) != zarr] = -np.inf
    extra = np.bitwise_count(cfg).astype(float) - bin(zmask).count("1")
    if p >= 1.0:
        lw[extra > 0] = -np.inf
    elif p > 0.0:
        lw = lw + extra * np.log1p(-p)
    if not np.any(np.isfinite(lw)):
        raise ZeroMassError("conditional_given_dilution: z has zero mass")
    bayes = SiteMeasure(mu.graph, mu.sites, lw - logsumexp(lw))

    ones = mu.vertices_of(zmask)
    zeros = set(mu.sites) - ones
    tilted = tilt(mu, ones, zeros, p)
    err = float(np.max(np.abs(bayes.probs() - tilted.probs())))
    if err > 1e-12:
        raise ConsistencyError(
            f"dilution conditional disagrees with tilted measure by {err}"
        )
    return tilted


def p_star_given_dilution(mu: SiteMeasure, p: float, cap: int = TILT_PAIRS_CAP) -> float:
    """Minimum over sites v and over all pairs A, B of subsets of the other
    sites of the tilted mean E X_v under tilt(mu, A, B, p).

    Requires the measure to give positive mass to the all-ones
    configuration, so every conditioning event is nonvacuous.
    """
    k = mu.k
    if not np.isfinite(mu.log_weights[-1]):
        raise ValueError("measure does not support the all-ones configuration")
    if k > cap + 1:
        raise CapExceeded(f"p_star_given_dilution: {k} sites exceeds cap {cap + 1}")
    t = np.log1p(-p) if p < 1.0 else -np.inf
    best = 1.0
    rests = np.arange(1 << (k - 1), dtype=np.uint64)
    for j in range(k):
        l0, l1 = _split_on_bit(mu.log_weights, j)
        for a in range(1 << (k - 1)):
            sel = (rests & np.uint64(a)) == np.uint64(a)
            s0, s1 = l0[sel], l1[sel]
            sub = rests[sel]
            for b in range(1 << (k - 1)):
                nb = np.bitwise_count(sub & np.uint64(b)).astype(float)
                if p >= 1.0:
                    w = np.where(nb > 0, -np.inf, 0.0)
                else:
                    w = nb * t
                num = logsumexp(s1 + w)
                den = np.logaddexp(num, logsumexp(s0 + w))
                if np.isfinite(den):
                    best = min(best, float(np.exp(num - den)))
    return best


# -- Holley-type conditional comparison ---------------------------------------


def _tri_tables(mu: SiteMeasure, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Log-masses of {X_v=0} and {X_v=1} jointly with every partial
    specification of the other sites.

    Index is base 3 over the k-1 other positions: digit 0/1 fixes the value,
    digit 2 marginalizes it.
    """
    k = mu.k
    m = k - 1
    l0, l1 = _split_on_bit(mu.log_weights, j)
    size = 3**m
    t0 = np.full(size, -np.inf)
    t1 = np.full(size, -np.inf)
    pow3 = [3**i for i in range(m)]
    # base layer: binary rest-configs land at their base-3 image
    for rest in range(1 << m):
        idx = 0
        for i in range(m):
            if rest >> i & 1:
                idx += pow3[i]
        t0[idx] = l0[rest]
        t1[idx] = l1[rest]
    # fill in stars from the two children below
    for idx in range(size):
        rem = idx
        for i in range(m):
            d = rem % 3
            if d == 2:
                lo = idx - 2 * pow3[i]
                hi = idx - pow3[i]
                t0[idx] = np.logaddexp(t0[lo], t0[hi])
                t1[idx] = np.logaddexp(t1[lo], t1[hi])
                break
            rem //= 3
    return t0, t1


def holley_star(muX: SiteMeasure, muY: SiteMeasure, tol: float = 1e-12,
                cap: int = HOLLEY_CAP) -> bool:
    """Conditional-comparison order: for every site v, every finite F not
    containing v, and all x >= y on F with positive mass,
    E[X_v | X_F = x] >= E[Y_v | Y_F = y] within tol.

    Exhaustive over all F, so it costs on the order of n 4^(n-1).
    """
    if muX.graph is not muY.graph and muX.graph != muY.graph:
        raise ValueError("measures live on different graphs")
    if muX.sites != muY.sites:
        raise ValueError("measures live on different site sets")
    k = muX.k
    if k > cap:
        raise CapExceeded(f"holley_star: {k} sites exceeds cap {cap}")
    m = k - 1
    pow3 = [3**i for i in range(m)]
    # joint digit choices (dx, dy): star/star or fixed pairs with x >= y
    choices = ((2, 2), (0, 0), (1, 0), (1, 1))
    for j in range(k):
        x0, x1 = _tri_tables(muX, j)
        y0, y1 = _tri_tables(muY, j)
        for joint in range(4**m):
            tx = ty = 0
            rem = joint
            for i in range(m):
                dx, dy = choices[rem & 3]
                rem >>= 2
                tx += dx * pow3[i]
                ty += dy * pow3[i]
            mx = np.logaddexp(x0[tx], x1[tx])
            if not np.isfinite(mx):
                continue
            my = np.logaddexp(y0[ty], y1[ty])
            if not np.isfinite(my):
                continue
            ex = np.exp(x1[tx] - mx)
            ey = np.exp(y1[ty] - my)
            if ex < ey - tol:
                return False
    return True


# -- Strassen domination via max-flow -----------------------------------------


@dataclass
class Coupling:
    """Sparse joint law over configuration pairs (x, y)."""

    muX: SiteMeasure
    muY: SiteMeasure
    probs: dict[tuple[int, int], float]

    def marginal_error(self) -> float:
        px = np.zeros(1 << self.muX.k)
        py = np.zeros(1 << self.muY.k)
        for (x, y), q in self.probs.items():
            px[x] += q
            py[y] += q
        ex = float(np.max(np.abs(px - self.muX.probs())))
        ey = float(np.max(np.abs(py - self.muY.probs())))
        return max(ex, ey)

    def is_monotone(self) -> bool:
        return all((x & y) == y for (x, y), q in self.probs.items() if q > 0)


def _integerize(probs: np.ndarray, total: int) -> np.ndarray:
    """Round probabilities to integers summing exactly to ``total``
    (largest-remainder, ties broken by index)."""
    probs = probs / probs.sum()
    scaled = probs * total
    base = np.floor(scaled).astype(np.int64)
    short = total - int(base.sum())
    frac = scaled - base
    order = np.lexsort((np.arange(frac.size), -frac))
    if short > 0:
        base[order[:short]] += 1
    elif short < 0:
        big = np.lexsort((np.arange(base.size), -base))
        base[big[:-short]] -= 1
    return base


def strassen_dominates(
    muX: SiteMeasure,
    muY: SiteMeasure,
    tol: float = 1e-9,
    cap: int = STRASSEN_CAP,
    return_coupling: bool = False,
):
    """Does a monotone coupling with X >= Y pointwise exist?

    Decided by max-flow on the bipartite network source -> x (capacity
    mu(x)), x -> y for y <= x (unbounded), y -> sink (capacity nu(y)):
    domination holds iff the flow saturates total mass 1, up to tol.
    On success a Coupling witness can be extracted from the flow.

    Masses are scaled to a 2^30 integer grid for the flow solver; the
    decision allows for the measured rounding error (a total-variation
    bound on how far rounding can move the optimal flow), so true
    dominations are never rejected and false acceptances are limited to
    margins below roughly 2^k / 2^30 + tol.
    """
    if muX.sites != muY.sites:
        raise ValueError("measures live on different site sets")
    k = muX.k
    if k > cap:
        raise CapExceeded(f"strassen_dominates: {k} sites exceeds cap {cap}")
    n_cfg = 1 << k
    probs_x, probs_y = muX.probs(), muY.probs()
    px = _integerize(probs_x, _FLOW_SCALE)
    py = _integerize(probs_y, _FLOW_SCALE)
    rounding = 0.5 * (
        np.abs(px - probs_x / probs_x.sum() * _FLOW_SCALE).sum()
        + np.abs(py - probs_y / probs_y.sum() * _FLOW_SCALE).sum()
    )

    rows, cols, caps = [], [], []
    source = 0
    sink = 2 * n_cfg + 1
    for x in range(n_cfg):
        if px[x] > 0:
            rows.append(source)
            cols.append(1 + x)
            caps.append(px[x])
    for y in range(n_cfg):
        if py[y] > 0:
            rows.append(1 + n_cfg + y)
            cols.append(sink)
            caps.append(py[y])
    for x in range(n_cfg):
        if px[x] == 0:
            continue
        s = x
        while True:
            if py[s] > 0:
                rows.append(1 + x)
                cols.append(1 + n_cfg + s)
                caps.append(_FLOW_SCALE)
            if s == 0:
                break
            s = (s - 1) & x
    graph = csr_matrix(
        (np.array(caps, dtype=np.int64), (rows, cols)),
        shape=(sink + 1, sink + 1),
    )
    result = maximum_flow(graph, source, sink)
    slack = max(1, int(tol * _FLOW_SCALE)) + int(np.ceil(rounding))
    ok = result.flow_value >= _FLOW_SCALE - slack
    if not return_coupling:
        return ok
    if not ok:
        return False, None
    flow = result.flow.tocoo()
    probs = {}
    for r, c, f in zip(flow.row, flow.col, flow.data):
        if f > 0 and 1 <= r <= n_cfg and n_cfg + 1 <= c <= 2 * n_cfg:
            probs[(r - 1, c - 1 - n_cfg)] = f / _FLOW_SCALE
    return True, Coupling(muX, muY, probs)


def p_of(mu: SiteMeasure, tolerance: float = 1e-6, cap: int = STRASSEN_CAP) -> float:
    """Largest i.i.d. density stochastically dominated by the measure,
    located by binary search (domination against nu_p is monotone in p)."""
    g, sites = mu.graph, mu.sites
    if strassen_dominates(mu, bernoulli_measure(g, 1.0, sites), cap=cap):
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tolerance:
        mid = (lo + hi) / 2
        if strassen_dominates(mu, bernoulli_measure(g, mid, sites), cap=cap):
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


# -- monotone couplings --------------------------------------------------------


def _prefix_conditional(mu: SiteMeasure, order_pos: list[int], fixed_bits: int,
                        upto: int) -> float:
    """P(X at order_pos[upto] = 1 | X on order_pos[:upto] = fixed_bits).

    fixed_bits uses bit i for order_pos[i].  Returns NaN on a zero-mass
    prefix.
    """
    k = mu.k
    target = order_pos[upto]
    lw = mu.log_weights
    idx = np.arange(1 << k, dtype=np.uint64)
    sel = np.ones(1 << k, dtype=bool)
    for i in range(upto):
        want = (fixed_bits >> i) & 1
        sel &= ((idx >> np.uint64(order_pos[i])) & np.uint64(1)) == want
    ones = sel & (((idx >> np.uint64(target)) & np.uint64(1)) == 1)
    zeros = sel & (((idx >> np.uint64(target)) & np.uint64(1)) == 0)
    l1 = logsumexp(lw[ones]) if ones.any() else -np.inf
    l0 = logsumexp(lw[zeros]) if zeros.any() else -np.inf
    tot = np.logaddexp(l0, l1)
    if not np.isfinite(tot):
        return float("nan")
    return float(np.exp(l1 - tot))


def sequential_monotone_coupling(
    muX: SiteMeasure, muY: SiteMeasure, order=None
) -> Coupling:
    """Monotone coupling built site by site in the given order.

    Each step couples the two single-site conditionals through one uniform:
    (1,1) with probability qY, (1,0) with pX - qY, (0,0) with 1 - pX.  This
    requires pX >= qY along every reachable prefix pair, the operative part
    of the conditional-comparison order; a violation raises HolleyViolation
    rather than producing a broken coupling.
    """
    if muX.sites != muY.sites:
        raise ValueError("measures live on different site sets")
    k = muX.k
    order = list(order) if order is not None else list(muX.sites)
    if sorted(order) != sorted(muX.sites):
        raise ValueError("order must be a permutation of the sites")
    order_pos = [muX.pos(v) for v in order]

    partial: dict[tuple[int, int], float] = {(0, 0): 1.0}
    for step in range(k):
        nxt: dict[tuple[int, int], float] = {}
        for (xp, yp), q in partial.items():
            pX = _prefix_conditional(muX, order_pos, xp, step)
            qY = _prefix_conditional(muY, order_pos, yp, step)
            if np.isnan(pX) or np.isnan(qY):
                raise ConsistencyError("zero-mass prefix reached in coupling")
            if pX < qY - 1e-12:
                raise HolleyViolation(
                    f"conditional comparison fails at {order[step]} given "
                    f"prefix x={xp:b}, y={yp:b}: {pX} < {qY}"
                )
            bit = 1 << step
            for key, w in (
                ((xp | bit, yp | bit), q * qY),
                ((xp | bit, yp), q * max(pX - qY, 0.0)),
                ((xp, yp), q * (1.0 - pX)),
            ):
                if w > 0.0:
                    nxt[key] = nxt.get(key, 0.0) + w
        partial = nxt

    # prefix bit i refers to order[i]; translate to site-position masks
    def to_mask(prefix_bits: int) -> int:
        m = 0
        for i in range(k):
            if prefix_bits >> i & 1:
                m |= 1 << order_pos[i]
        return m

    probs = {}
    for (xp, yp), q in partial.items():
        probs[(to_mask(xp), to_mask(yp))] = probs.get((to_mask(xp), to_mask(yp)), 0.0) + q
    coupling = Coupling(muX, muY, probs)
    err = coupling.marginal_error()
    if err > 1e-9:
        raise ConsistencyError(f"coupling marginals off by {err}")
    if not coupling.is_monotone():
        raise ConsistencyError("coupling support leaves the monotone cone")
    return coupling


def joint_glauber_step(x: dict, y: dict, v: int, u: float, pX, qY):
    """One monotone joint single-site update at v driven by a shared uniform.

    New pair value at v: (1,1) if u <= qY(v,y); (1,0) if qY(v,y) < u <=
    pX(v,x); (0,0) if u > pX(v,x).  Preserves x >= y.
    """
    if any(x[w] < y[w] for w in x):
        raise ValueError("joint_glauber_step requires x >= y pointwise")
    px_val = pX(v, x)
    qy_val = qY(v, y)
    if px_val < qy_val - 1e-12:
        raise HolleyViolation(
            f"update at {v}: pX={px_val} < qY={qy_val}; ordering would break"
        )
    x2, y2 = dict(x), dict(y)
    if u <= qy_val:
        x2[v], y2[v] = 1, 1
    elif u <= px_val:
        x2[v], y2[v] = 1, 0
    else:
        x2[v], y2[v] = 0, 0
    return x2, y2


# -- decoupling by ones ---------------------------------------------------------


def _ones_clusters(nbrs: list[list[int]], members: set[int], ones_bits: int) -> list[set[int]]:
    clusters = []
    todo = {j for j in members if ones_bits >> j & 1}
    while todo:
        start = todo.pop()
        comp = {start}
        stack = [start]
        while stack:
            a = stack.pop()
            for b in nbrs[a]:
                if b in todo:
                    todo.discard(b)
                    comp.add(b)
                    stack.append(b)
        clusters.append(comp)
    return clusters


def is_decoupled_by_ones(
    mu: SiteMeasure,
    connected_ones: bool = False,
    ones_connected_at_infinity: bool = False,
    tol: float = 1e-12,
    cap: int = DECOUPLE_CAP,
) -> bool:
    """Conditional independence of inside and outside given an all-ones
    boundary, checked by exhaustive factorization for every finite A.

    With ``connected_ones`` the conditioning additionally requires the
    boundary of A to lie inside a single cluster of the ones of the
    exterior; with ``ones_connected_at_infinity`` clusters that both touch
    the graph's boundary set count as one cluster (connected through
    infinity under the finite-volume convention).
    """
    k = mu.k
    if k > cap:
        raise CapExceeded(f"is_decoupled_by_ones: {k} sites exceeds cap {cap}")
    nbrs = mu.induced_neighbors()
    probs = mu.probs()
    boundary_pos = {j for j, v in enumerate(mu.sites) if v in mu.graph.boundary}
    full = (1 << k) - 1

    for amask in range(1, full):
        apos = [j for j in range(k) if amask >> j & 1]
        cpos = [j for j in range(k) if not amask >> j & 1]
        bpos = sorted(
            {b for a in apos for b in nbrs[a] if not amask >> b & 1}
        )
        bmask = sum(1 << b for b in bpos)

        if connected_ones:
            cset = set(cpos)
            cfgs = []
            for cfg in range(1 << k):
                if probs[cfg] == 0.0 or (cfg & bmask) != bmask:
                    continue
                if bpos:
                    clusters = _ones_clusters(nbrs, cset, cfg)
                    if ones_connected_at_infinity:
                        touching = [c for c in clusters if c & boundary_pos]
                        if touching:
                            merged = set().union(*touching)
                            clusters = [c for c in clusters if not c & boundary_pos]
                            clusters.append(merged)
                    if not any(all(b in c for b in bpos) for c in clusters):
                        continue
                cfgs.append(cfg)
            cfgs = np.array(cfgs, dtype=np.int64)
        else:
            all_cfg = np.arange(1 << k, dtype=np.int64)
            cfgs = all_cfg[
                ((all_cfg & bmask) == bmask) & (probs > 0.0)
            ]
        if cfgs.size == 0:
            continue
        w = probs[cfgs]
        total = w.sum()
        a_vals, a_inv = np.unique(cfgs & amask, return_inverse=True)
        c_vals, c_inv = np.unique(cfgs & ~amask & full, return_inverse=True)
        joint = np.zeros((a_vals.size, c_vals.size))
        np.add.at(joint, (a_inv, c_inv), w)
        joint /= total
        pa = joint.sum(axis=1)
        pc = joint.sum(axis=0)
        if np.max(np.abs(joint - np.outer(pa, pc))) > tol:
            return False
    return True
