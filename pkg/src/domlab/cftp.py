"""Bounding-chain coupling from the past.

The chain runs on {0, 1, *} configurations, * marking sites whose value is
not yet determined by the randomness revealed so far.  A site update draws
(U, T) from the deterministic stream; if the updated site's non-one cluster
is star-free the exact conditional is computable (the law decouples across
an all-ones boundary) and the site resolves to 0/1 by thresholding U;
otherwise the site resolves to 1 when U clears the global conditional
floor and stays * otherwise.  Composing sweeps backward in time gives a
sample of the target law once no stars remain.

Two execution styles: direct sweeps over a volume (small exact instances,
full-state assertions) and a lazy backward evaluator that only touches the
updates a query actually depends on (localized coding-radius runs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, NonTermination, ResolutionError
from .domination import SiteMeasure, dilute_law, p_star, tilt
from .graph import Graph
from .ising import IsingParams, ising_measure
from .streams import UpdateStream

STAR = 2


# -- tri-state configurations --------------------------------------------------


@dataclass(frozen=True)
class TriConfig:
    """Element of {0, 1, *}^sites; star = value not yet determined."""

    sites: tuple[int, ...]
    values: tuple[int, ...]

    def __post_init__(self):
        if len(self.sites) != len(self.values):
            raise ValueError("sites/values length mismatch")
        if not all(t in (0, 1, STAR) for t in self.values):
            raise ValueError("values must be 0, 1 or STAR")

    @staticmethod
    def all_stars(sites) -> "TriConfig":
        sites = tuple(sites)
        return TriConfig(sites, (STAR,) * len(sites))

    def value(self, v: int) -> int:
        return self.values[self.sites.index(v)]

    def with_value(self, v: int, val: int) -> "TriConfig":
        i = self.sites.index(v)
        vals = list(self.values)
        vals[i] = val
        return TriConfig(self.sites, tuple(vals))

    def precedes(self, other: "TriConfig") -> bool:
        """self is at least as specified as other (agrees wherever other is
        not a star)."""
        return all(
            o == STAR or s == o for s, o in zip(self.values, other.values)
        )

    def star_count(self) -> int:
        return sum(1 for t in self.values if t == STAR)

    def as_bits(self) -> int:
        if any(t == STAR for t in self.values):
            raise ValueError("configuration still contains stars")
        out = 0
        for i, t in enumerate(self.values):
            out |= t << i
        return out


# -- oracles --------------------------------------------------------------------


class BernoulliOracle:
    """Target law is i.i.d. of density p: every site resolves outright."""

    def __init__(self, sites, p: float):
        self.sites = tuple(sites)
        self.p_star = p

    def resolve(self, lookup, v: int) -> float | None:
        return self.p_star


class DilutedIsingOracle:
    """Conditional oracle for the independently diluted plus-boundary Ising
    field on a volume.

    Given the chain state, the site's cluster among non-one values is
    gathered; if it is star-free the exact conditional of the diluted field
    at v (zeros on the rest of the cluster, ones on its boundary) is
    computed by enumeration over the cluster and cached by cluster shape.
    """

    def __init__(
        self,
        g: Graph,
        volume,
        beta: float,
        dilution: float,
        fields=0.0,
        p_star: float | None = None,
        cluster_cap: int = 22,
    ):
        self.graph = g
        self.sites = tuple(sorted(volume))
        self.volume = frozenset(volume)
        self.beta = beta
        self.q = dilution
        self.fields = fields
        self.cluster_cap = cluster_cap
        self._cache: dict[tuple[frozenset, int], float] = {}
        if p_star is None:
            p_star = diluted_ising_p_star(g, IsingParams(beta, self.volume, fields),
                                          dilution)
        self.p_star = p_star

    def _cluster(self, lookup, v: int):
        """Component of v among volume sites currently not equal to 1."""
        cluster = {v}
        stack = [v]
        saw_star = False
        while stack:
            u = stack.pop()
            for w in self.graph.neighbors[u]:
                if w in self.volume and w not in cluster:
                    val = lookup(w)
                    if val != 1:
                        if val == STAR:
                            saw_star = True
                        cluster.add(w)
                        stack.append(w)
        return frozenset(cluster), saw_star

    def conditional(self, cluster: frozenset, v: int) -> float:
        key = (cluster, v)
        got = self._cache.get(key)
        if got is not None:
            return got
        if len(cluster) > self.cluster_cap:
            raise ResolutionError(
                f"cluster of {len(cluster)} sites exceeds exact cap "
                f"{self.cluster_cap}",
                cluster=cluster,
            )
        params = IsingParams(self.beta, cluster, self.fields)
        mu = ising_measure(self.graph, params, cap=self.cluster_cap)
        tilted = tilt(mu, (), cluster - {v}, self.q)
        val = self.q * tilted.marginal_one(v)
        self._cache[key] = val
        return val

    def resolve(self, lookup, v: int) -> float | None:
        cluster, saw_star = self._cluster(lookup, v)
        if saw_star:
            return None
        return self.conditional(cluster, v)


def diluted_ising_p_star(g: Graph, params: IsingParams, dilution: float,
                         cap: int = 22) -> float:
    """Exact conditional floor of the diluted field, by enumeration."""
    mu = ising_measure(g, params, cap=cap)
    return p_star(dilute_law(mu, dilution))


# -- direct sweeps ----------------------------------------------------------------


def psi_hat(y: TriConfig, v: int, u: float, oracle) -> TriConfig:
    """Single-site bounding-chain update.

    Resolved conditional q: value 1 if u <= q else 0.  Blocked (the cluster
    still contains stars): 1 if u clears the conditional floor, else *.
    """
    q = oracle.resolve(lambda w: y.value(w), v)
    if q is not None:
        if q < oracle.p_star - 1e-12:
            raise ConsistencyError(
                f"resolved conditional {q} below the floor {oracle.p_star}"
            )
        return y.with_value(v, 1 if u <= q else 0)
    return y.with_value(v, 1 if u <= oracle.p_star else STAR)


def sweep(y: TriConfig, active, stream: UpdateStream, step: int, oracle) -> TriConfig:
    """One composed update pass: freeze everything outside the active set to
    *, then update the active sites in the order of their T draws (ties by
    vertex index)."""
    active = set(active)
    vals = [
        val if s in active else STAR for s, val in zip(y.sites, y.values)
    ]
    y = TriConfig(y.sites, tuple(vals))
    order = sorted(
        (stream.pair(v, step)[1], v) for v in active
    )
    for t_draw, v in order:
        u = stream.pair(v, step)[0]
        y = psi_hat(y, v, u, oracle)
    return y


@dataclass
class CftpResult:
    values: dict[int, int]
    horizon: int
    resolved_at_horizon: dict[int, int]
    coding_radii: dict[int, int] | None = None


def cftp_sample(
    g: Graph,
    volume,
    oracle,
    stream: UpdateStream,
    max_horizon: int = 1 << 16,
    enforce_threshold: bool = True,
) -> CftpResult:
    """Coupling from the past over the full volume.

    Doubles the backward horizon, composing the horizon's sweeps from the
    deep past forward and reusing the stream's randomness bit for bit,
    until no stars remain.  Each doubling is checked against the previous
    one: resolved sites must keep their values (the composition only ever
    refines), else the run aborts with ConsistencyError.
    """
    sites = tuple(sorted(volume))
    delta = g.max_degree
    threshold = 1.0 - 1.0 / (3 * delta - 1)
    if enforce_threshold and not oracle.p_star > threshold:
        raise ValueError(
            f"oracle floor {oracle.p_star} not above 1 - 1/(3 Delta - 1) = "
            f"{threshold}; termination is not guaranteed (pass "
            "enforce_threshold=False to try anyway)"
        )
    resolved_at: dict[int, int] = {}
    prev: TriConfig | None = None
    horizon = 1
    while horizon <= max_horizon:
        y = TriConfig.all_stars(sites)
        for step in range(horizon, 0, -1):
            y = sweep(y, sites, stream, step, oracle)
        if prev is not None and not y.precedes(prev):
            raise ConsistencyError(
                f"backward composition not refining at horizon {horizon}"
            )
        for s, val in zip(y.sites, y.values):
            if val != STAR and s not in resolved_at:
                resolved_at[s] = horizon
        if y.star_count() == 0:
            return CftpResult(
                dict(zip(y.sites, y.values)), horizon, resolved_at
            )
        prev = y
        horizon *= 2
    raise NonTermination(
        "stars remain at the horizon cap",
        unresolved=[s for s, val in zip(prev.sites, prev.values) if val == STAR],
        horizon=max_horizon,
    )


# -- lazy backward evaluation -------------------------------------------------------


def oracle_update_rule(oracle):
    """The bounding-chain single-site rule as a (lookup, v, u) callback."""

    def rule(lookup, v, u):
        q = oracle.resolve(lookup, v)
        if q is not None:
            return 1 if u <= q else 0
        return 1 if u <= oracle.p_star else STAR

    return rule


class LazyBackwardChain:
    """Evaluate a backward-composed chain at time 0 touching only the
    updates the query actually depends on.

    The dynamics is restricted to ``ball``: sites outside it read as
    eternal stars, as does anything before the horizon start.  Update times
    for step i live in (-i, -i+1), so a site's most recent update at or
    before a query time is found by direct arithmetic.  ``rule`` maps
    (lookup, site, uniform) to the update outcome; ``lookup`` hands back
    the neighbor values just before the update.
    """

    def __init__(self, g: Graph, ball, rule, stream: UpdateStream, horizon: int):
        self.g = g
        self.ball = frozenset(ball)
        self.rule = rule
        self.stream = stream
        self.horizon = horizon
        self.memo: dict[tuple[int, int], int] = {}

    def _last_step_before(self, v: int, t: float, strict: bool) -> int | None:
        """Most recent step whose update time is (strictly) before t."""
        i = max(1, math.floor(-t))
        while True:
            if i > self.horizon:
                return None
            ti = self.stream.pair(v, i)[1] - i
            if ti < t or (not strict and ti == t):
                return i
            i += 1

    def value_at(self, v: int, t: float, strict: bool = True) -> int:
        if v not in self.ball:
            return STAR
        step = self._last_step_before(v, t, strict)
        if step is None:
            return STAR
        return self.update_value(v, step)

    def update_value(self, v: int, step: int) -> int:
        key = (v, step)
        got = self.memo.get(key)
        if got is not None:
            return got
        u, t_draw = self.stream.pair(v, step)
        t = t_draw - step
        val = self.rule(lambda w: self.value_at(w, t, strict=True), v, u)
        self.memo[key] = val
        return val

    def final_value(self, v: int) -> int:
        return self.value_at(v, 0.0, strict=False)


def localized_value(
    g: Graph, oracle, stream: UpdateStream, v: int, r: int, horizon: int | None = None,
    ball=None,
) -> int:
    """Value at v of the radius-r, horizon-2r localized backward composition
    (horizon may be overridden)."""
    if horizon is None:
        horizon = 2 * r
    if horizon <= 0:
        return STAR
    if ball is None:
        ball = g.ball(v, r)
    ball = frozenset(ball) & frozenset(oracle.sites)
    chain = LazyBackwardChain(g, ball, oracle_update_rule(oracle), stream, horizon)
    return chain.final_value(v)


def coding_radius(
    g: Graph, oracle, stream: UpdateStream, v: int, r_max: int,
    balls=None,
) -> int | None:
    """Smallest r <= r_max at which the localized composition resolves v,
    or None when even r_max leaves a star."""
    for r in range(1, r_max + 1):
        ball = balls[r] if balls is not None else None
        if localized_value(g, oracle, stream, v, r, ball=ball) != STAR:
            return r
    return None


def wilson_upper(successes: int, trials: int, z: float = 2.5758293035489004) -> float:
    """Upper Wilson score bound (default z: two-sided 99%)."""
    if trials == 0:
        return 1.0
    phat = successes / trials
    denom = 1.0 + z * z / trials
    center = phat + z * z / (2 * trials)
    rad = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials))
    return min(1.0, (center + rad) / denom)


def tail_bound_constant(delta: int, p: float) -> tuple[float, float]:
    """(C, x) with the chain's star-survival bounded by C x^r: x = (3
    Delta - 1)(1 - p) and C = 3 Delta / ((3 Delta - 1)(1 - x)); C is inf
    when x >= 1 (vacuous bound)."""
    x = (3 * delta - 1) * (1.0 - p)
    if x >= 1.0:
        return math.inf, x
    c = 3 * delta / ((3 * delta - 1) * (1.0 - x))
    return c, x


@dataclass(frozen=True)
class TailRow:
    r: int
    trials: int
    survivals: int
    estimate: float
    wilson_upper: float
    bound: float


def coding_tail(
    g: Graph,
    oracle,
    base_seed: int,
    v: int,
    r_values,
    trials: int,
) -> list[TailRow]:
    """Empirical tail P(coding radius > r) against the closed-form bound.

    Per trial the localized runs share one stream, so resolution is
    monotone in r and the scan can stop at the first resolved radius.
    """
    r_values = sorted(r_values)
    balls = {r: g.ball(v, r) for r in r_values}
    surv = {r: 0 for r in r_values}
    master = UpdateStream(base_seed)
    for trial in range(trials):
        stream = master.derive(f"trial-{trial}")
        for r in r_values:
            if localized_value(g, oracle, stream, v, r, ball=balls[r]) == STAR:
                surv[r] += 1
            else:
                break
    c, x = tail_bound_constant(g.max_degree, oracle.p_star)
    rows = []
    for r in r_values:
        bound = c * x**r if math.isfinite(c) else math.inf
        rows.append(
            TailRow(
                r,
                trials,
                surv[r],
                surv[r] / trials,
                wilson_upper(surv[r], trials),
                bound,
            )
        )
    return rows


# -- cluster-wise conditional composition ---------------------------------------------


def diluted_ising_cluster_law(g: Graph, volume, beta: float, dilution: float,
                              fields=0.0, cap: int = 22):
    """Per-shape conditional sampler for the diluted field's zero clusters:
    the law of the underlying spins on a cluster given that the diluted
    observation vanished there and its boundary is all ones."""
    volume = frozenset(volume)
    cache: dict[frozenset, np.ndarray] = {}

    def law(cluster: frozenset) -> np.ndarray:
        got = cache.get(cluster)
        if got is None:
            mu = ising_measure(g, IsingParams(beta, cluster, fields), cap=cap)
            got = tilt(mu, (), cluster, dilution).probs()
            cache[cluster] = got
        return got

    return law


def compose_full(g: Graph, volume, z, cluster_law, aux_stream: UpdateStream):
    """Resample the underlying field on each zero cluster of z.

    z: bit configuration of the diluted field over the sorted volume (int
    mask or mapping).  Each zero cluster is sampled independently from the
    shape-keyed conditional law by inverse CDF, with the driving uniform
    attached to the cluster's minimal vertex under an auxiliary ordering,
    so the output is a deterministic function of (z, auxiliary stream).
    """
    sites = tuple(sorted(volume))
    pos = {v: j for j, v in enumerate(sites)}
    if not isinstance(z, (int, np.integer)):
        zmask = 0
        for v, bit in dict(z).items():
            if bit:
                zmask |= 1 << pos[v]
    else:
        zmask = int(z)
    out = zmask
    zeros = [v for v in sites if not zmask >> pos[v] & 1]
    for cluster in g.components(zeros):
        eta = {u: aux_stream.pair(u, 0)[0] for u in cluster}
        anchor = min(cluster, key=lambda u: (eta[u], u))
        xi = aux_stream.pair(anchor, 1)[0]
        probs = cluster_law(cluster)
        cdf = np.cumsum(probs)
        local = int(np.searchsorted(cdf, xi * cdf[-1], side="right"))
        local = min(local, len(probs) - 1)
        members = sorted(cluster)
        for j, u in enumerate(members):
            if local >> j & 1:
                out |= 1 << pos[u]
    return out
