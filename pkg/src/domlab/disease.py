"""The disease-spreading auxiliary chain.

Same backward space-time structure as the bounding chain, but with a rule
that forgets the target law entirely: an update turns the site 1 ("cured")
with probability p, otherwise the site becomes * when it can reach a * by
a path of 0s ("spreaders") and 0 when it cannot.  Stars at time zero are
witnessed by chains through triangledown updates, which is what turns
survival into a countable Peierls sum; the chain/H-graph combinatorics
here validate that reduction run by run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .cftp import STAR, LazyBackwardChain, tail_bound_constant, wilson_upper
from .graph import Graph
from .streams import UpdateStream


def _star_connected_plain(g: Graph, lookup, v: int) -> bool:
    """Is there a path from v through 0-valued sites to a *-valued one?"""
    seen = {v}
    stack = [v]
    while stack:
        u = stack.pop()
        for w in g.neighbors[u]:
            if w in seen:
                continue
            val = lookup(w)
            if val == STAR:
                return True
            if val == 0:
                seen.add(w)
                stack.append(w)
    return False


def _star_connected_shielded(g: Graph, lookup, v: int) -> bool:
    """Connected-ones variant: v escapes infection only when some single
    cluster of ones cuts it off from every star.

    Equivalent to the shielded-set formulation: a finite set A containing v
    with an all-ones boundary lying inside one cluster of the exterior ones
    and no stars inside exists iff removing some 1-cluster leaves v in a
    star-free component.  Reads the whole ball, so keep it to small scales.
    """
    region = {v}
    stack = [v]
    values = {v: lookup(v)}
    # flood the entire reachable patch, recording values
    while stack:
        u = stack.pop()
        for w in g.neighbors[u]:
            if w not in values:
                values[w] = lookup(w)
                region.add(w)
                stack.append(w)
    ones = {u for u, val in values.items() if val == 1}
    clusters = []
    todo = set(ones)
    while todo:
        start = todo.pop()
        comp = {start}
        front = [start]
        while front:
            a = front.pop()
            for b in g.neighbors[a]:
                if b in todo:
                    todo.discard(b)
                    comp.add(b)
                    front.append(b)
        clusters.append(comp)
    for cluster in clusters:
        comp = {v}
        front = [v]
        shielded = True
        while front and shielded:
            a = front.pop()
            for b in g.neighbors[a]:
                if b in cluster or b in comp:
                    continue
                if values.get(b, STAR) == STAR and b != v:
                    shielded = False
                    break
                comp.add(b)
                front.append(b)
        if shielded:
            return False
    return True


def disease_rule(g: Graph, p: float, connected_ones: bool = False):
    """Single-site rule: 1 with probability p; else * iff star-connected."""
    connect = _star_connected_shielded if connected_ones else _star_connected_plain

    def rule(lookup, v, u):
        if u <= p:
            return 1
        return STAR if connect(g, lookup, v) else 0

    return rule


def disease_run(
    g: Graph,
    p: float,
    r: int,
    n: int,
    v: int,
    stream: UpdateStream,
    connected_ones: bool = False,
    ball=None,
) -> int:
    """Value at v after the n-step backward composition restricted to the
    radius-r ball (everything outside the ball reads as a star)."""
    if n < 1 or r < 0:
        raise ValueError("need n >= 1 and r >= 0")
    if ball is None:
        ball = g.ball(v, r)
    chain = LazyBackwardChain(g, ball, disease_rule(g, p, connected_ones), stream, n)
    return chain.final_value(v)


# -- traced runs and witnessing chains ---------------------------------------------


@dataclass(frozen=True)
class SpaceTimeUpdate:
    """One applied update: outcome_one records whether U <= p (a cure)."""

    vertex: int
    step: int
    time: float
    outcome_one: bool


@dataclass
class DiseaseTrace:
    """Full chronological run with per-site value histories."""

    graph: Graph
    p: float
    r: int
    n: int
    center: int
    stream: UpdateStream
    ball: frozenset[int]
    updates: list[SpaceTimeUpdate]
    history: dict[int, list[tuple[float, int]]]  # site -> [(time, new value)]
    value: int  # final value at the center

    def value_at(self, u: int, t: float) -> int:
        """State of u at time t (after any update at exactly t)."""
        if u not in self.ball:
            return STAR
        out = STAR
        for when, val in self.history.get(u, ()):
            if when <= t:
                out = val
            else:
                break
        return out

    def last_update_time(self, u: int, t: float) -> float:
        """T_{u,t} over the full stream (may precede the window)."""
        i = max(1, math.floor(-t))
        while True:
            ti = self.stream.pair(u, i)[1] - i
            if ti <= t:
                return ti
            i += 1


def disease_run_traced(
    g: Graph,
    p: float,
    r: int,
    n: int,
    v: int,
    stream: UpdateStream,
    connected_ones: bool = False,
) -> DiseaseTrace:
    """Chronological simulation keeping every state change, so witnessing
    chains can be reconstructed afterwards."""
    if n < 1 or r < 0:
        raise ValueError("need n >= 1 and r >= 0")
    ball = frozenset(g.ball(v, r))
    pending = []
    for u in ball:
        for step in range(1, n + 1):
            uu, tt = stream.pair(u, step)
            pending.append((tt - step, u, step, uu))
    pending.sort()
    state = {u: STAR for u in ball}
    lookup = lambda w: state[w] if w in ball else STAR
    connect = _star_connected_shielded if connected_ones else _star_connected_plain
    updates = []
    history: dict[int, list[tuple[float, int]]] = {u: [] for u in ball}
    for t, u, step, uu in pending:
        if uu <= p:
            val = 1
        else:
            val = STAR if connect(g, lookup, u) else 0
        state[u] = val
        updates.append(SpaceTimeUpdate(u, step, t, uu <= p))
        history[u].append((t, val))
    return DiseaseTrace(
        g, p, r, n, v, stream, ball, updates, history, state.get(v, STAR)
    )


@dataclass
class Chain:
    """Witness for a surviving star: a path in the graph together with a
    nonincreasing time sequence, each hop entered no later than the
    previous site's last update."""

    vertices: tuple[int, ...]  # x_0 .. x_k
    times: tuple[float, ...]  # t_0 .. t_{k+1}

    @property
    def length(self) -> int:
        return len(self.vertices) - 1

    def update_sequence(self, trace: DiseaseTrace):
        """u(c): the last update of x_i at or before t_i, for i < k."""
        out = []
        for i in range(self.length):
            x, t = self.vertices[i], self.times[i]
            out.append((x, trace.last_update_time(x, t)))
        return out


def validate_chain(trace: DiseaseTrace, chain: Chain) -> None:
    """Structural checks: adjacency, time ordering, the no-update-crossing
    condition, and that all witnessed updates are triangledowns."""
    xs, ts = chain.vertices, chain.times
    if len(ts) != len(xs) + 1:
        raise ValueError("times must have one more entry than vertices")
    g = trace.graph
    for a, b in zip(xs, xs[1:]):
        if b not in g.neighbors[a]:
            raise ValueError(f"chain hop {a}-{b} is not an edge")
    for a, b in zip(ts, ts[1:]):
        if b > a:
            raise ValueError("chain times must be nonincreasing")
    for i in range(chain.length):
        if trace.last_update_time(xs[i], ts[i]) > ts[i + 1] + 1e-12:
            raise ValueError("temporal segment crosses an update")
    for x, t in chain.update_sequence(trace):
        step = math.ceil(-t)
        if trace.stream.pair(x, step)[0] <= trace.p:
            raise ValueError("chain passes through a curing update")


def witness_chain(trace: DiseaseTrace) -> Chain:
    """Reconstruct a chain witnessing the surviving star at the center,
    following the star backwards through its causes.

    Walks from (v, 0): jump to the site's previous update; if that kept the
    star, follow a path of spreaders to the star that caused it; stop when
    the trail leaves the window or the ball.
    """
    if trace.value != STAR:
        raise ValueError("no surviving star to witness")
    g = trace.graph
    xs = [trace.center]
    ts = [0.0]
    current = trace.center
    s_prev = 0.0
    while True:
        s = trace.last_update_time(current, s_prev)
        if s <= -trace.n:
            ts.append(s)
            break
        # the update at time s produced the star; find its source
        path = _star_path(trace, current, s)
        for w in path[1:]:
            xs.append(w)
            ts.append(s)
        current = path[-1]
        if current not in trace.ball:
            ts.append(s)
            break
        s_prev = s
    return Chain(tuple(xs), tuple(ts))


def _star_path(trace: DiseaseTrace, v: int, t: float) -> list[int]:
    """Shortest path from v through sites that are 0 at time t to a site
    that is * at time t (the ball's exterior counts as all stars)."""
    g = trace.graph
    prev = {v: None}
    queue = [v]
    while queue:
        new_queue = []
        for u in queue:
            for w in g.neighbors[u]:
                if w in prev:
                    continue
                val = trace.value_at(w, t)
                if val == STAR:
                    prev[w] = u
                    out = [w]
                    while prev[out[-1]] is not None:
                        out.append(prev[out[-1]])
                    return list(reversed(out))
                if val == 0:
                    prev[w] = u
                    new_queue.append(w)
        queue = new_queue
    raise ValueError(f"no star reachable from {v} at time {t}")


def splice_to_simple(trace: DiseaseTrace, chain: Chain) -> Chain:
    """Shortest-equivalent chain: while the update sequence repeats an
    update point, cut out the loop between the repeats."""
    while True:
        seq = chain.update_sequence(trace)
        seen: dict[tuple[int, float], int] = {}
        dup = None
        for i, upd in enumerate(seq):
            if upd in seen:
                dup = (seen[upd], i)
                break
            seen[upd] = i
        if dup is None:
            return chain
        a, b = dup
        xs = chain.vertices[: a + 1] + chain.vertices[b + 1 :]
        ts = chain.times[: a + 1] + chain.times[b + 1 :]
        chain = Chain(xs, ts)


def h_graph_check(trace: DiseaseTrace, chain: Chain, r: int, n: int) -> bool:
    """Does the chain's shortest-equivalent update sequence form a simple
    path in the update graph H of length at least min(r, n/2)?

    H joins updates (x, t), (x', t') with t > t' when x ~ x' and x' is not
    updated again in (t', t].
    """
    validate_chain(trace, chain)
    chain = splice_to_simple(trace, chain)
    seq = chain.update_sequence(trace)
    if len(set(seq)) != len(seq):
        return False
    for (x1, t1), (x2, t2) in zip(seq, seq[1:]):
        if x2 not in trace.graph.neighbors[x1]:
            return False
        hi, lo = ((x1, t1), (x2, t2)) if t1 > t2 else ((x2, t2), (x1, t1))
        if trace.last_update_time(lo[0], hi[1]) != lo[1]:
            return False
    return len(seq) >= min(r, n / 2)


# -- survival experiments --------------------------------------------------------


def union_bound(delta: int, p: float, min_length: float) -> float:
    """Sum over k >= min_length of 3 Delta (3 Delta - 1)^(k-1) (1-p)^k."""
    c, x = tail_bound_constant(delta, p)
    if not math.isfinite(c):
        return math.inf
    return c * x ** math.ceil(min_length)


@dataclass(frozen=True)
class SurvivalRow:
    p: float
    r: int
    n: int
    trials: int
    survivals: int
    estimate: float
    wilson_upper: float
    bound: float
    vacuous: bool


def survival_curve(
    g: Graph,
    p: float,
    v: int,
    r_values,
    trials: int,
    base_seed: int,
    connected_ones: bool = False,
) -> list[SurvivalRow]:
    """Empirical star-survival probability at (r, n = 2r) against the
    closed-form bound C((3 Delta - 1)(1 - p))^r.

    All radii share each trial's stream, so survival is monotone along the
    radius scan and the per-trial work stops at the first cured radius.
    """
    r_values = sorted(r_values)
    balls = {r: g.ball(v, r) for r in r_values}
    surv = {r: 0 for r in r_values}
    master = UpdateStream(base_seed)
    for trial in range(trials):
        stream = master.derive(f"disease-{trial}")
        for r in r_values:
            out = disease_run(
                g, p, r, 2 * r, v, stream,
                connected_ones=connected_ones, ball=balls[r],
            )
            if out == STAR:
                surv[r] += 1
            else:
                break
    c, x = tail_bound_constant(g.max_degree, p)
    rows = []
    for r in r_values:
        vacuous = not math.isfinite(c)
        bound = math.inf if vacuous else c * x**r  # min(r, n/2) = r at n = 2r
        rows.append(
            SurvivalRow(
                p, r, 2 * r, trials, surv[r], surv[r] / trials,
                wilson_upper(surv[r], trials), bound, vacuous,
            )
        )
    return rows
