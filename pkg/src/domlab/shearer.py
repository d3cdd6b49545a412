"""Repulsive lattice gas with hard-core interactions and the dilution
measure it induces, plus the two-temperature Ising dilution built on it.

The central object is the unique probability measure P on independent sets
of a dependency graph with prescribed superset probabilities
P(X >= S) = prod alpha_x; it exists exactly when the independent-set
polynomial stays positive under negated weights, and every table built
here is validated against that defining identity.

Weights may be floats or mpmath.mpf; the extended-precision path exists
because the Ising dilution weights span enormous ranges once the inverse
temperatures are large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .errors import CapExceeded, ConsistencyError, RegimeError
from .domination import SiteMeasure
from .graph import Graph, boundaries, connected_subsets
from .ising import IsingParams, ising_measure

ELEMENT_CAP = 24
INDSET_CAP = 1_000_000
DILUTED_CAP = 12


@dataclass(frozen=True)
class DependencyGraph:
    """Simple graph on abstract elements; adjacency as bitmasks."""

    m: int
    adj_masks: tuple[int, ...]
    elements: tuple[frozenset[int], ...] | None = None

    def __post_init__(self):
        if len(self.adj_masks) != self.m:
            raise ValueError("adjacency length mismatch")
        for x in range(self.m):
            if self.adj_masks[x] >> x & 1:
                raise ValueError("dependency graph must be irreflexive")
            for y in range(self.m):
                if (self.adj_masks[x] >> y & 1) != (self.adj_masks[y] >> x & 1):
                    raise ValueError("adjacency not symmetric")

    @staticmethod
    def from_edges(m: int, edges) -> "DependencyGraph":
        masks = [0] * m
        for x, y in edges:
            masks[x] |= 1 << y
            masks[y] |= 1 << x
        return DependencyGraph(m, tuple(masks))

    @staticmethod
    def from_connected_subsets(g: Graph, volume, max_size=None) -> "DependencyGraph":
        """Elements are the connected subsets of the volume; two elements are
        adjacent when their graph distance is at most 1."""
        elems = connected_subsets(g, within=volume, max_size=max_size)
        if len(elems) > ELEMENT_CAP:
            raise CapExceeded(
                f"dependency graph would have {len(elems)} elements (cap {ELEMENT_CAP})"
            )
        vmasks = []
        closed = []
        for s in elems:
            vm = 0
            cm = 0
            for v in s:
                vm |= 1 << v
                cm |= 1 << v | g.neighbor_mask(v)
            vmasks.append(vm)
            closed.append(cm)
        m = len(elems)
        masks = [0] * m
        for i in range(m):
            for j in range(i + 1, m):
                if closed[i] & vmasks[j]:
                    masks[i] |= 1 << j
                    masks[j] |= 1 << i
        return DependencyGraph(m, tuple(masks), tuple(elems))

    def closed_mask(self, set_mask: int) -> int:
        """S union its neighborhood, as an element bitmask."""
        out = set_mask
        x = set_mask
        while x:
            b = x & -x
            out |= self.adj_masks[b.bit_length() - 1]
            x ^= b
        return out

    def is_independent(self, set_mask: int) -> bool:
        x = set_mask
        while x:
            b = x & -x
            if self.adj_masks[b.bit_length() - 1] & set_mask:
                return False
            x ^= b
        return True

    def independent_sets(self, cap: int = INDSET_CAP) -> list[int]:
        """All independent sets as bitmasks, deterministic order."""
        out = []

        def rec(prefix: int, avail: int):
            if len(out) > cap:
                raise CapExceeded(f"more than {cap} independent sets")
            out.append(prefix)
            a = avail
            while a:
                b = a & -a
                x = b.bit_length() - 1
                a ^= b
                rec(prefix | b, a & ~self.adj_masks[x])

        rec(0, (1 << self.m) - 1)
        return sorted(out)


def _one_like(w):
    if w and isinstance(w[0], mpmath.mpf):
        return mpmath.mpf(1)
    return 1.0


class _PolyEval:
    """Memoized evaluator for Z on arbitrary available-element masks.

    Deletion at the lowest available element: Z(A) = Z(A - x) + w_x Z(A
    minus the closed neighborhood of x); restricting weights to a subset of
    elements reuses the same recursion.
    """

    def __init__(self, dep: DependencyGraph, w, cap: int = INDSET_CAP):
        self.dep = dep
        self.w = list(w)
        self.cap = cap
        self.memo: dict[int, object] = {0: _one_like(self.w)}

    def z(self, avail: int):
        memo = self.memo
        if avail in memo:
            return memo[avail]
        if len(memo) > self.cap:
            raise CapExceeded("independent-set recursion exceeded cap")
        b = avail & -avail
        x = b.bit_length() - 1
        val = self.z(avail ^ b) + self.w[x] * self.z(avail & ~(self.dep.adj_masks[x] | b))
        memo[avail] = val
        return val


def indep_poly(dep: DependencyGraph, w, cap: int = INDSET_CAP):
    """Independent-set polynomial: sum over independent X' of prod w_x.
    Negative weights are allowed."""
    if dep.m > ELEMENT_CAP:
        raise CapExceeded(f"indep_poly: {dep.m} elements exceeds cap {ELEMENT_CAP}")
    return _PolyEval(dep, list(w), cap=cap).z((1 << dep.m) - 1)


def indep_poly_rooted(dep: DependencyGraph, w, s_mask: int, cap: int = INDSET_CAP):
    """Sum over independent X' containing S; zero when S is dependent."""
    w = list(w)
    if not dep.is_independent(s_mask):
        return _one_like(w) * 0
    prod = _one_like(w)
    x = s_mask
    while x:
        b = x & -x
        prod = prod * w[b.bit_length() - 1]
        x ^= b
    full = (1 << dep.m) - 1
    return prod * _PolyEval(dep, w, cap=cap).z(full & ~dep.closed_mask(s_mask))


@dataclass
class ShearerSystem:
    """Exact table of the dilution measure with superset probabilities
    prod alpha_x over independent sets."""

    dep: DependencyGraph
    alpha: tuple
    r: tuple | None
    table: dict[int, object]  # independent-set mask -> probability

    def prob(self, s_mask: int):
        return self.table.get(s_mask, _one_like(list(self.alpha)) * 0)

    def superset_prob(self, s_mask: int):
        """P(X >= S), which the defining identity pins to prod alpha_x."""
        if not self.dep.is_independent(s_mask):
            return _one_like(list(self.alpha)) * 0
        out = _one_like(list(self.alpha))
        x = s_mask
        while x:
            b = x & -x
            out = out * self.alpha[b.bit_length() - 1]
            x ^= b
        return out


def shearer_measure(
    dep: DependencyGraph,
    alpha,
    r=None,
    formula_tol: float = 1e-10,
    cap: int = INDSET_CAP,
) -> ShearerSystem:
    """Build the exact dilution-measure table from superset weights alpha.

    P(S) = prod_{x in S} alpha_x * Z(-alpha restricted off the closed
    neighborhood of S).  Raises RegimeError when the weights sit beyond the
    positivity threshold (some P(S) substantially negative or Z <= 0);
    values in [-1e-12, 0) are rounded up to zero.  The defining identity
    sum_{T >= S} P(T) = prod alpha is then verified for every independent S.
    """
    alpha = tuple(alpha)
    if len(alpha) != dep.m:
        raise ValueError("alpha length mismatch")
    if any(a < 0 or a >= 1 for a in alpha):
        raise RegimeError("alpha entries must lie in [0, 1)")
    neg = [-a for a in alpha]
    ev = _PolyEval(dep, neg, cap=cap)
    full = (1 << dep.m) - 1
    z_full = ev.z(full)
    if z_full <= 0:
        raise RegimeError(
            f"independent-set polynomial nonpositive at -alpha (Z = {z_full}); "
            "weights are beyond the existence threshold"
        )
    ind_sets = dep.independent_sets(cap=cap)
    table: dict[int, object] = {}
    one = _one_like(list(alpha))
    for s in ind_sets:
        prod = one
        x = s
        while x:
            b = x & -x
            prod = prod * alpha[b.bit_length() - 1]
            x ^= b
        val = prod * ev.z(full & ~dep.closed_mask(s))
        if val < 0:
            if val < -1e-12:
                raise RegimeError(
                    f"P({s:b}) = {val} < 0: weights beyond the existence threshold"
                )
            val = val * 0
        table[s] = val
    total = sum(table.values())
    if abs(total - 1) > 1e-9:
        raise ConsistencyError(f"dilution table mass {total} != 1")
    # defining identity, checked by scattering each P(T) onto its subsets
    acc: dict[int, object] = {s: one * 0 for s in ind_sets}
    for t, val in table.items():
        sub = t
        while True:
            acc[sub] = acc[sub] + val
            if sub == 0:
                break
            sub = (sub - 1) & t
    sys_tmp = ShearerSystem(dep, alpha, None, table)
    for s in ind_sets:
        want = sys_tmp.superset_prob(s)
        if abs(acc[s] - want) > formula_tol:
            raise ConsistencyError(
                f"superset identity off by {acc[s] - want} at S={s:b}"
            )
    return ShearerSystem(dep, alpha, tuple(r) if r is not None else None, table)


def check_sufficient(dep: DependencyGraph, alpha, r) -> bool:
    """alpha_x <= r_x prod_{y ~ x} (1 - r_y) at every element."""
    alpha, r = list(alpha), list(r)
    if any(not 0 <= ri < 1 for ri in r):
        raise ValueError("r entries must lie in [0, 1)")
    for x in range(dep.m):
        bound = r[x]
        nb = dep.adj_masks[x]
        while nb:
            b = nb & -nb
            bound = bound * (1 - r[b.bit_length() - 1])
            nb ^= b
        if alpha[x] > bound:
            return False
    return True


def ratio_bound_check(sys: ShearerSystem, s1_mask: int, s2_mask: int,
                      tol: float = 1e-9):
    """Conditional-atom ratio bound between nested closed neighborhoods:
    [P(S1)/P(X>=S1)] / [P(S2)/P(X>=S2)] >= prod_{x in S2+ \\ S1+} (1-r_x).

    Requires S1+ <= S2+ and the sufficient condition's r weights stored on
    the system.  Returns (lhs, rhs, ok).
    """
    if sys.r is None:
        raise ValueError("system has no r weights")
    dep = sys.dep
    c1, c2 = dep.closed_mask(s1_mask), dep.closed_mask(s2_mask)
    if c1 & ~c2:
        raise ValueError("closed neighborhood of S1 is not inside that of S2")
    p1, p2 = sys.prob(s1_mask), sys.prob(s2_mask)
    q1, q2 = sys.superset_prob(s1_mask), sys.superset_prob(s2_mask)
    if q1 <= 0 or q2 <= 0 or p2 <= 0:
        raise ValueError("ratio undefined: zero-mass conditioning")
    lhs = (p1 / q1) / (p2 / q2)
    rhs = _one_like(list(sys.alpha))
    diff = c2 & ~c1
    while diff:
        b = diff & -diff
        rhs = rhs * (1 - sys.r[b.bit_length() - 1])
        diff ^= b
    return lhs, rhs, lhs >= rhs - tol


# -- the two-temperature Ising dilution ----------------------------------------


@dataclass
class DilutionSystem(ShearerSystem):
    """Shearer system over the connected subsets of an Ising volume, carrying
    the parameters it was built from and the convergence checks."""

    graph: Graph = None
    volume: tuple[int, ...] = ()
    beta1: float = 0.0
    beta2: float = 0.0
    b1: dict = field(default_factory=dict)
    b2: dict = field(default_factory=dict)
    h: float = 0.0
    neighborhood_check: tuple[bool, ...] = ()
    site_sum_check: tuple[bool, ...] = ()
    site_sums: tuple = ()
    site_sum_target: object = None

    @property
    def eps(self):
        return self.beta1 - self.beta2

    @property
    def all_checks_hold(self) -> bool:
        return all(self.neighborhood_check) and all(self.site_sum_check)


def _field_lookup(b, volume):
    if isinstance(b, (int, float, mpmath.mpf)):
        return {v: b for v in volume}
    return {v: b.get(v, 0.0) for v in volume}


def build_dilution_system(
    g: Graph,
    volume,
    beta1: float,
    beta2: float,
    b1=0.0,
    b2=0.0,
    h: float = None,
    max_size: int = None,
    precision: int | None = None,
) -> DilutionSystem:
    """Shearer system whose elements are the connected subsets of the volume.

    Element weights:
      alpha_S = e^{-2 beta1 |d_e S| - 2 b1(S)} (e^{2 eps |d_e S| - 2 eps h |S|} - 1)
      r_S     = alpha_S e^{2 eps h |S| + 2 b1(S) - 2 b2(S)}
    with eps = beta1 - beta2 > 0 and h the edge isoperimetric constant to
    use in the exponents (pass the graph's interior constant or the known
    infinite-graph value).  Also evaluates, and records, whether
    alpha_S <= r_S prod(1 - r_{S'}) holds at every element and whether the
    per-site sums sum_{S' ni u} r_{S'} stay under 0.01 eps h / (Delta + 1).

    ``precision``: mantissa bits for mpmath arithmetic (None = float64).
    """
    if h is None:
        raise ValueError("pass h explicitly (edge isoperimetric constant)")
    if not beta1 > beta2:
        raise RegimeError("need beta1 > beta2")
    volume = tuple(sorted(volume))
    if max_size is None:
        max_size = len(volume)
    dep = DependencyGraph.from_connected_subsets(g, volume, max_size=max_size)
    b1m = _field_lookup(b1, volume)
    b2m = _field_lookup(b2, volume)

    if precision is not None:
        ctx = mpmath.mp.clone()
        ctx.prec = precision
        exp = ctx.exp
        expm1 = lambda t: ctx.exp(t) - 1
        num = ctx.mpf
    else:
        exp = math.exp
        expm1 = math.expm1
        num = float

    eps = num(beta1) - num(beta2)
    alphas, rs = [], []
    for s in dep.elements:
        _, ecount, _ = boundaries(g, s)
        b1s = sum(num(b1m[v]) for v in s)
        b2s = sum(num(b2m[v]) for v in s)
        gap = 2 * eps * ecount - 2 * eps * num(h) * len(s)
        if gap < 0:
            raise RegimeError(
                f"edge boundary of {sorted(s)} falls below h|S|; "
                "h is too large for this volume"
            )
        a = exp(-2 * num(beta1) * ecount - 2 * b1s) * expm1(gap)
        if not a < 1:
            raise RegimeError(
                f"alpha weight at {sorted(s)} is {a} >= 1; fields too negative"
            )
        alphas.append(a)
        rs.append(a * exp(2 * eps * num(h) * len(s) + 2 * b1s - 2 * b2s))

    base = shearer_measure(dep, alphas, r=rs)

    nb_check = []
    for x in range(dep.m):
        bound = rs[x]
        nb = dep.adj_masks[x]
        while nb:
            b = nb & -nb
            bound = bound * (1 - rs[b.bit_length() - 1])
            nb ^= b
        nb_check.append(bool(alphas[x] <= bound))
    target = num(0.01) * eps * num(h) / (g.max_degree + 1)
    site_sums = []
    site_check = []
    for u in volume:
        total = sum(rs[i] for i, s in enumerate(dep.elements) if u in s)
        site_sums.append(total)
        site_check.append(bool(total <= target))

    return DilutionSystem(
        dep=dep,
        alpha=base.alpha,
        r=base.r,
        table=base.table,
        graph=g,
        volume=volume,
        beta1=beta1,
        beta2=beta2,
        b1=b1m,
        b2=b2m,
        h=h,
        neighborhood_check=tuple(nb_check),
        site_sum_check=tuple(site_check),
        site_sums=tuple(site_sums),
        site_sum_target=target,
    )


def _mp_ising_probs(g, params, ctx):
    """Plus-boundary Ising probabilities at mpmath precision."""
    vol = sorted(params.volume)
    k = len(vol)
    pos = {v: j for j, v in enumerate(vol)}
    beta = ctx.mpf(params.beta)
    weights = []
    edges = [
        (u, v)
        for u in range(g.n)
        for v in g.neighbors[u]
        if u < v and (u in pos or v in pos)
    ]
    for cfg in range(1 << k):
        spin = lambda v: (2 * (cfg >> pos[v] & 1) - 1) if v in pos else 1
        e = ctx.mpf(0)
        for u, v in edges:
            e += beta * spin(u) * spin(v)
        for v in vol:
            e += ctx.mpf(params.field_at(v)) * spin(v)
        weights.append(ctx.exp(e))
    z = sum(weights)
    return [w / z for w in weights]


@dataclass
class DilutedIsingLaw:
    measure: SiteMeasure
    probs: list  # exact (possibly mpf) probabilities
    max_route_gap: float  # worst relative disagreement of the two routes


def diluted_ising_law(
    g: Graph,
    volume,
    params1: IsingParams,
    system: DilutionSystem,
    tol: float = 1e-9,
    precision: int | None = None,
    cap: int = DILUTED_CAP,
) -> DilutedIsingLaw:
    """Law of the diluted spin field Z (pointwise min of the colder-measure
    sample and the lattice-gas dilution), computed two independent ways.

    Route A convolves over subsets of minus clusters: sum_J P(X = sigma
    with K_J flipped) P(dilution adds exactly K_J).  Route B is the closed
    form P(X = sigma) P(no dilution touches sigma) e^{2 eps |d_e sigma| -
    2 eps h |sigma|}.  The two must agree to ``tol`` relative, else
    ConsistencyError; their agreement is exactly the simplification that
    makes the conditional-ratio bound tractable.
    """
    volume = tuple(sorted(volume))
    if volume != system.volume:
        raise ValueError("system was built for a different volume")
    if params1.beta != system.beta1:
        raise ValueError("system was built for a different beta1")
    if len(volume) > cap:
        raise CapExceeded(f"diluted_ising_law: volume {len(volume)} exceeds cap {cap}")
    if system.dep.elements is None:
        raise ValueError("system carries no subset elements")

    if precision is not None:
        ctx = mpmath.mp.clone()
        ctx.prec = precision
        exp = ctx.exp
        px = _mp_ising_probs(g, params1, ctx)
        zero = ctx.mpf(0)
    else:
        ctx = None
        exp = math.exp
        px = [float(t) for t in ising_measure(g, params1).probs()]
        zero = 0.0

    elem_index = {s: i for i, s in enumerate(system.dep.elements)}
    pos = {v: j for j, v in enumerate(volume)}
    k = len(volume)
    eps = system.eps
    h = system.h

    def py_empty(minus_clusters):
        t_mask = 0
        denom = _one_like(list(system.alpha))
        for c in minus_clusters:
            if c not in elem_index:
                raise ValueError(
                    f"cluster {sorted(c)} is not a system element; build the "
                    "system with max_size = |volume|"
                )
            i = elem_index[c]
            t_mask |= 1 << i
            denom = denom * system.alpha[i]
        if denom == 0:
            raise ConsistencyError("zero alpha weight on an occupied cluster")
        return system.prob(t_mask) / denom

    probs_z = []
    worst_gap = 0.0
    for cfg in range(1 << k):
        minus = frozenset(v for v in volume if not cfg >> pos[v] & 1)
        clusters = g.components(minus) if minus else []
        if minus:
            _, e_minus, _ = boundaries(g, minus)
        else:
            e_minus = 0
        p_empty = py_empty(clusters)
        # route B: closed form
        route_b = px[cfg] * p_empty * exp(2 * eps * e_minus - 2 * eps * h * len(minus))
        # route A: convolution over which clusters the dilution contributed
        route_a = zero
        nc = len(clusters)
        for jbits in range(1 << nc):
            flipped = cfg
            aw = _one_like(list(system.alpha))
            for j in range(nc):
                if jbits >> j & 1:
                    aw = aw * system.alpha[elem_index[clusters[j]]]
                    for v in clusters[j]:
                        flipped |= 1 << pos[v]
            route_a = route_a + px[flipped] * aw
        route_a = route_a * p_empty
        scale = max(abs(route_a), abs(route_b))
        if scale > 0:
            gap = float(abs(route_a - route_b) / scale)
            worst_gap = max(worst_gap, gap)
            if gap > tol:
                raise ConsistencyError(
                    f"dilution law routes disagree by {gap} at config {cfg:b}"
                )
        probs_z.append(route_b)
    total = sum(probs_z)
    if abs(float(total) - 1.0) > 1e-9:
        raise ConsistencyError(f"diluted law mass {total} != 1")

    if ctx is not None:
        lw = np.array([float(ctx.log(t)) if t > 0 else -np.inf for t in probs_z])
        mp_logs = [ctx.log(t) if t > 0 else None for t in probs_z]
    else:
        with np.errstate(divide="ignore"):
            lw = np.log(np.array(probs_z, dtype=float))
        mp_logs = None
    measure = SiteMeasure(g, volume, lw, mp_log_weights=mp_logs)
    return DilutedIsingLaw(measure, probs_z, worst_gap)


@dataclass(frozen=True)
class HolleyRatioReport:
    all_ok: bool
    worst_margin: float  # min over checks of ratio / required ratio
    n_checked: int
    failures: tuple


def verify_holley_ratio(
    zlaw: DilutedIsingLaw | SiteMeasure,
    params2: IsingParams,
    tol: float = 1e-9,
) -> HolleyRatioReport:
    """Check that the diluted law dominates the hotter Ising conditionals:
    P(Z_v = + | rest) / P(Z_v = - | rest) >= e^{2 beta2 m_v + 2 b2(v)} for
    every site and every positive-mass conditioning, m_v counting frozen
    plus spins outside the volume."""
    if isinstance(zlaw, DilutedIsingLaw):
        probs = zlaw.probs
        measure = zlaw.measure
    else:
        measure = zlaw
        probs = [float(t) for t in zlaw.probs()]
    g = measure.graph
    sites = measure.sites
    extended = probs and isinstance(probs[0], mpmath.mpf)
    exp = mpmath.exp if extended else math.exp
    pos = {v: j for j, v in enumerate(sites)}
    k = len(sites)
    worst = math.inf
    failures = []
    checked = 0
    for v in sites:
        j = pos[v]
        b2v = params2.field_at(v)
        for cfg in range(1 << k):
            if cfg >> j & 1:
                continue
            lo, hi = probs[cfg], probs[cfg | 1 << j]
            if lo <= 0 or hi <= 0:
                continue
            m_v = 0
            for u in g.neighbors[v]:
                if u in pos:
                    m_v += 2 * (cfg >> pos[u] & 1) - 1
                else:
                    m_v += 1
            margin = float((hi / lo) / exp(2 * params2.beta * m_v + 2 * b2v))
            checked += 1
            worst = min(worst, margin)
            if margin < 1.0 - tol:
                failures.append((v, cfg, margin))
    return HolleyRatioReport(not failures, worst, checked, tuple(failures))
