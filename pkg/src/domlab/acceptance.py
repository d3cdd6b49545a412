"""The acceptance suite: every exit criterion as a callable check.

Each criterion returns a CriterionResult and is runnable at two scales:
``full`` uses the committed trial counts and tolerances, ``quick`` shrinks
Monte Carlo sizes for a fast smoke gate while keeping every exact check
intact.  tests/test_acceptance.py runs the full level; the CLI exposes
both.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .cftp import (
    STAR,
    DilutedIsingOracle,
    cftp_sample,
    coding_tail,
    compose_full,
    diluted_ising_cluster_law,
    diluted_ising_p_star,
    tail_bound_constant,
)
from .disease import (
    disease_run_traced,
    h_graph_check,
    survival_curve,
    union_bound,
    witness_chain,
)
from .domination import (
    SiteMeasure,
    bernoulli_measure,
    conditional_given_dilution,
    dilute_law,
    measure_from_probs,
    p_of,
    p_star,
    strassen_dominates,
    tilt,
)
from .graph import (
    Graph,
    cheeger,
    cycle_graph,
    grid_box,
    path_graph,
    star_graph,
    tree_ball,
)
from .ising import IsingParams, alpha, ising_bounds, ising_measure
from .percolation import (
    PercConfig,
    cutset_conditional_law,
    cutsets,
    infinite_proxy,
    perc_sample,
)
from .shearer import (
    DependencyGraph,
    build_dilution_system,
    check_sufficient,
    diluted_ising_law,
    shearer_measure,
    verify_holley_ratio,
)
from .streams import UpdateStream


@dataclass
class CriterionResult:
    name: str
    passed: bool
    elapsed: float
    details: str


def _tv(counts: np.ndarray, probs: np.ndarray) -> float:
    return 0.5 * float(np.abs(counts / counts.sum() - probs).sum())


# -- 1 ---------------------------------------------------------------------------


def criterion_two_point(quick: bool) -> CriterionResult:
    """p_of and p_star of the two-point measure P(00)=p^2, P(11)=1-p^2."""
    g = path_graph(2)
    worst = 0.0
    ok = True
    for p in (0.2, 0.4, 0.7):
        mu = measure_from_probs(g, (0, 1), [p * p, 0.0, 0.0, 1.0 - p * p])
        got = p_of(mu, tolerance=1e-7)
        worst = max(worst, abs(got - (1.0 - p)))
        ok &= abs(got - (1.0 - p)) <= 1e-6 and p_star(mu) == 0.0
    return CriterionResult(
        "two-point-exactness", ok, 0.0, f"max |p_of - (1-p)| = {worst:.2e}"
    )


# -- 2 ---------------------------------------------------------------------------


def criterion_dilution_conditional_identity(quick: bool) -> CriterionResult:
    """Conditional law given the dilution equals the tilted measure, every z."""
    graphs = [
        path_graph(6),
        cycle_graph(6),
        star_graph(5),
        tree_ball(3, 1),
    ]
    rng = np.random.default_rng(12345)
    worst = 0.0
    checked = 0
    for g in graphs:
        sites = tuple(range(g.n))
        measures = [
            bernoulli_measure(g, 0.6, sites),
            SiteMeasure(g, sites, rng.standard_normal(1 << g.n)),
        ]
        for mu in measures:
            for p in (0.3, 0.7):
                zlaw = dilute_law(mu, p)
                for z in range(1 << g.n):
                    if not np.isfinite(zlaw.log_weights[z]):
                        continue
                    cond = conditional_given_dilution(mu, p, int(z))
                    ones = cond.vertices_of(int(z))
                    zeros = set(sites) - ones
                    gap = float(
                        np.max(np.abs(cond.probs() - tilt(mu, ones, zeros, p).probs()))
                    )
                    worst = max(worst, gap)
                    checked += 1
    ok = worst <= 1e-12 and checked > 0
    return CriterionResult(
        "dilution-conditional-identity", ok, 0.0,
        f"{checked} conditionals, max abs error {worst:.2e}",
    )


# -- 3 ---------------------------------------------------------------------------


def criterion_ising_p_star_formula(quick: bool) -> CriterionResult:
    """Worst conditional of the free star equals 1/(e^(2 Delta beta) + 1)."""
    worst = 0.0
    for delta in (3, 4):
        g = tree_ball(delta, 1)
        for beta in (0.5, 1.0, 2.0):
            mu = ising_measure(g, IsingParams(beta, frozenset(range(g.n))))
            want = 1.0 / (math.exp(2 * delta * beta) + 1.0)
            worst = max(worst, abs(p_star(mu) - want))
    return CriterionResult(
        "ising-p-star-formula", worst <= 1e-12, 0.0, f"max abs error {worst:.2e}"
    )


# -- 4 ---------------------------------------------------------------------------


def criterion_dilution_holley_emergence(quick: bool) -> CriterionResult:
    """p_star(diluted plus state)/q grows with beta and tops 0.99 at beta=4."""
    g = tree_ball(3, 2)
    q = 0.9
    ratios = []
    for beta in (1.0, 2.0, 3.0, 4.0):
        mu = ising_measure(g, IsingParams(beta, g.interior))
        ratios.append(p_star(dilute_law(mu, q)) / q)
    monotone = all(b >= a - 1e-12 for a, b in zip(ratios, ratios[1:]))
    ok = monotone and ratios[-1] > 0.99
    return CriterionResult(
        "dilution-holley-emergence", ok, 0.0,
        "ratios " + ", ".join(f"{x:.5f}" for x in ratios),
    )


# -- 5 ---------------------------------------------------------------------------


def criterion_bound_consistency(quick: bool) -> CriterionResult:
    """Closed-form lower bound <= p_of(exact measure) <= upper bounds."""
    graphs = [tree_ball(3, 2), grid_box(1, 5), grid_box(2, 4)]
    if not quick:
        graphs.append(tree_ball(3, 3))
    betas = (0.5, 1.5, 3.0)
    fields = (-0.3, 0.0, 0.5)
    search_tol = 1e-7
    slack = 1e-9 + search_tol + 2e-6  # p_of search + flow grid resolution
    worst_low = worst_high = math.inf
    count = 0
    for g in graphs:
        vol = g.interior
        h_e = float(cheeger(g, exclude_boundary=True).edge)
        delta = g.max_degree
        for beta in betas:
            for b in fields:
                params = IsingParams(beta, vol, b)
                mu = ising_measure(g, params)
                a = alpha(g, params)
                rep = ising_bounds(delta, h_e, beta, b, a)
                val = p_of(mu, tolerance=search_tol)
                worst_low = min(worst_low, val - rep.lower)
                worst_high = min(worst_high, rep.upper - val)
                count += 1
                if val - rep.lower < -slack or rep.upper - val < -slack:
                    return CriterionResult(
                        "closed-form-bound-consistency", False, 0.0,
                        f"violated at {g.n}-vertex graph, beta={beta}, b={b}: "
                        f"lower={rep.lower:.6f} p_of={val:.6f} upper={rep.upper:.6f}",
                    )
    return CriterionResult(
        "closed-form-bound-consistency", True, 0.0,
        f"{count} instances; min slacks lower {worst_low:.3e}, upper {worst_high:.3e}",
    )


# -- 6 ---------------------------------------------------------------------------


def _random_bounded_graph(rng) -> Graph:
    kind = rng.integers(0, 3)
    if kind == 0:
        return tree_ball(3, 2)
    if kind == 1:
        return grid_box(2, 3)
    # random connected graph on <= 9 vertices with a random boundary
    n = int(rng.integers(5, 10))
    edges = {(i - 1, i) for i in range(1, n)}
    for _ in range(n):
        u, v = rng.integers(0, n, size=2)
        if u != v:
            edges.add((min(u, v), max(u, v)))
    nbrs = [set() for _ in range(n)]
    for u, v in edges:
        nbrs[u].add(v)
        nbrs[v].add(u)
    boundary = frozenset(int(b) for b in rng.choice(n, size=2, replace=False))
    return Graph(n, tuple(tuple(sorted(a)) for a in nbrs), boundary)


def _brute_cutset_bayes(g, cs, z, omega_rest, p, q):
    pi = sorted(cs.vertices)
    m = len(pi)
    rest = omega_rest.open_mask & ~sum(1 << v for v in pi)
    weights = np.zeros(1 << m)
    for eps in range(1 << m):
        full = rest
        for j in range(m):
            if eps >> j & 1:
                full |= 1 << pi[j]
        x = infinite_proxy(g, PercConfig("site", full))
        like = 1.0
        for v in range(g.n):
            zv, xv = z >> v & 1, x >> v & 1
            if zv and not xv:
                like = 0.0
                break
            if zv:
                like *= q
            elif xv:
                like *= 1.0 - q
        o = bin(eps).count("1")
        weights[eps] = (p**o) * ((1 - p) ** (m - o)) * like
    return weights / weights.sum()


def criterion_cutset_conditional_law(quick: bool) -> CriterionResult:
    """Exact Bayes agreement of the cutset conditional on random instances."""
    rng = np.random.default_rng(777)
    n_instances = 15 if quick else 50
    worst = 0.0
    done = 0
    while done < n_instances:
        g = _random_bounded_graph(rng)
        interior = sorted(g.interior)
        if not interior:
            continue
        pivot = interior[int(rng.integers(len(interior)))]
        all_cuts = cutsets(g, pivot, max_interior=3)
        cs = all_cuts[int(rng.integers(len(all_cuts)))]
        p = float(rng.uniform(0.25, 0.9))
        q = float(rng.uniform(0.1, 0.9))
        omega = perc_sample(g, p, seed=int(rng.integers(2**31)))
        x = infinite_proxy(g, omega)
        y = perc_sample(g, q, seed=int(rng.integers(2**31))).open_mask
        z = x & y
        got = cutset_conditional_law(g, cs, z, omega, p, q)
        want = _brute_cutset_bayes(g, cs, z, omega, p, q)
        worst = max(worst, float(np.max(np.abs(got - want))))
        done += 1
    return CriterionResult(
        "cutset-conditional-law", worst <= 1e-12, 0.0,
        f"{done} instances, max abs error {worst:.2e}",
    )


# -- 7 ---------------------------------------------------------------------------


def criterion_shearer_suite(quick: bool) -> CriterionResult:
    """Dilution-measure identity, nonnegativity and the conditional-atom
    ratio bound on random subcritical dependency graphs."""
    rng = np.random.default_rng(4242)
    n_graphs = 40 if quick else 200
    pair_checks = 0
    for _ in range(n_graphs):
        m = int(rng.integers(2, 13))
        edges = [
            (i, j)
            for i in range(m)
            for j in range(i + 1, m)
            if rng.random() < rng.uniform(0.3, 0.7)
        ]
        dep = DependencyGraph.from_edges(m, edges)
        r = rng.uniform(0.05, 0.45, size=m)
        alphas = []
        for x in range(m):
            bound = r[x]
            nb = dep.adj_masks[x]
            while nb:
                bbit = nb & -nb
                bound *= 1 - r[bbit.bit_length() - 1]
                nb ^= bbit
            alphas.append(bound * rng.uniform(0.3, 1.0))
        if not check_sufficient(dep, alphas, list(r)):
            return CriterionResult(
                "shearer-suite", False, 0.0, "generator violated its own premise"
            )
        # identity and nonnegativity are validated inside the constructor
        sys = shearer_measure(dep, alphas, r=list(r))
        if any(v < 0 for v in sys.table.values()):
            return CriterionResult("shearer-suite", False, 0.0, "negative atom")
        ind = dep.independent_sets()
        if len(ind) > 600:
            ind = ind[:600]
        closed = np.array([dep.closed_mask(s) for s in ind], dtype=np.int64)
        qvals = np.array(
            [float(sys.prob(s) / sys.superset_prob(s)) for s in ind]
        )
        logs = np.array([math.log1p(-ri) for ri in r])
        admissible = (closed[:, None] & ~closed[None, :]) == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            lhs = qvals[:, None] / qvals[None, :]
        log_rhs = np.zeros_like(lhs)
        for x in range(m):
            in2 = (closed[None, :] >> x & 1).astype(bool)
            in1 = (closed[:, None] >> x & 1).astype(bool)
            log_rhs = log_rhs + np.where(in2 & ~in1, logs[x], 0.0)
        rhs = np.exp(log_rhs)
        valid = admissible & (qvals[None, :] > 0) & (qvals[:, None] >= 0)
        bad = valid & ~(lhs >= rhs - 1e-9)
        if bad.any():
            return CriterionResult(
                "shearer-suite", False, 0.0,
                f"ratio bound failed on {int(bad.sum())} pairs (m={m})",
            )
        pair_checks += int(valid.sum())
    return CriterionResult(
        "shearer-suite", True, 0.0,
        f"{n_graphs} systems, {pair_checks} admissible pairs checked",
    )


# -- 8 ---------------------------------------------------------------------------


def criterion_two_temperature_dilution(quick: bool) -> CriterionResult:
    """Two-route agreement of the diluted law, the conditional-ratio report
    and the Strassen sandwich between the two plus measures."""
    g = tree_ball(3, 3)
    volumes = [(0, 1), (0, 1, 2, 3)]
    if not quick:
        volumes.append((0, 1, 2, 3, 4, 5))
    pairs = ((2.0, 1.5), (3.0, 2.0))
    details = []
    for vol in volumes:
        sandwich_found = False
        for beta1, beta2 in pairs:
            sys = build_dilution_system(
                g, vol, beta1=beta1, beta2=beta2, h=1.0, precision=256
            )
            params1 = IsingParams(beta1, frozenset(vol))
            law = diluted_ising_law(g, vol, params1, sys, precision=256)
            if law.max_route_gap > 1e-9:
                return CriterionResult(
                    "two-temperature-dilution", False, 0.0,
                    f"route gap {law.max_route_gap} at volume {vol}",
                )
            params2 = IsingParams(beta2, frozenset(vol))
            report = verify_holley_ratio(law, params2)
            mu1 = ising_measure(g, params1)
            mu2 = ising_measure(g, params2)
            if (
                report.all_ok
                and strassen_dominates(mu1, law.measure)
                and strassen_dominates(law.measure, mu2)
            ):
                sandwich_found = True
                details.append(
                    f"|volume|={len(vol)}: ({beta1},{beta2}) margin "
                    f"{report.worst_margin:.6f}"
                )
                break
        if not sandwich_found:
            return CriterionResult(
                "two-temperature-dilution", False, 0.0,
                f"no passing parameter point for volume {vol}",
            )
    return CriterionResult(
        "two-temperature-dilution", True, 0.0, "; ".join(details)
    )


# -- 9 ---------------------------------------------------------------------------


def criterion_cftp_correctness(quick: bool) -> CriterionResult:
    """CFTP law vs exact diluted law in total variation; refinement checked
    on every run (any violation raises inside cftp_sample)."""
    g = tree_ball(3, 2)
    vol = tuple(sorted(g.interior))
    beta, q = 3.0, 0.95
    oracle = DilutedIsingOracle(g, vol, beta=beta, dilution=q)
    exact = dilute_law(ising_measure(g, IsingParams(beta, frozenset(vol))), q)
    trials = 10_000 if quick else 100_000
    counts = np.zeros(1 << len(vol))
    master = UpdateStream(90210)
    max_horizon_seen = 0
    for t in range(trials):
        res = cftp_sample(g, vol, oracle, master.derive(f"c9-{t}"))
        bits = 0
        for j, v in enumerate(vol):
            bits |= res.values[v] << j
        counts[bits] += 1
        max_horizon_seen = max(max_horizon_seen, res.horizon)
    tv = _tv(counts, exact.probs())
    return CriterionResult(
        "cftp-correctness", tv <= 0.02, 0.0,
        f"TV {tv:.4f} at {trials} seeds (p*={oracle.p_star:.4f}, "
        f"max horizon {max_horizon_seen}); refinement violations 0",
    )


# -- 10 --------------------------------------------------------------------------


def criterion_coding_radius_tail(quick: bool) -> CriterionResult:
    """Wilson-upper empirical coding-radius tail under C((3D-1)(1-p*))^r."""
    g = tree_ball(3, 4)
    vol = tuple(sorted(g.interior))
    beta, q = 3.0, 0.96
    p_star_exact = diluted_ising_p_star(
        g, IsingParams(beta, frozenset(vol)), q, cap=len(vol)
    )
    if p_star_exact < 0.95:
        return CriterionResult(
            "coding-radius-tail", False, 0.0,
            f"measured conditional floor {p_star_exact:.4f} below 0.95",
        )
    oracle = DilutedIsingOracle(
        g, vol, beta=beta, dilution=q, p_star=p_star_exact, cluster_cap=len(vol)
    )
    trials = 10_000 if quick else 100_000
    rows = coding_tail(g, oracle, base_seed=424242, v=0,
                       r_values=range(1, 11), trials=trials)
    bad = [row for row in rows if row.wilson_upper > row.bound]
    detail = (
        f"p*={p_star_exact:.4f}; "
        + "; ".join(f"r={row.r}: {row.estimate:.2e} <= {row.bound:.2e}" for row in rows[:4])
        + " ..."
    )
    return CriterionResult("coding-radius-tail", not bad, 0.0, detail)


# -- 11 --------------------------------------------------------------------------


def criterion_disease_model(quick: bool) -> CriterionResult:
    """Survival under the union bound, and a qualifying H-path behind every
    surviving run at small (r, n)."""
    g_big = tree_ball(3, 11)
    p = 0.95
    trials = 10_000 if quick else 100_000
    rows = survival_curve(g_big, p, 0, range(2, 11), trials=trials, base_seed=5150)
    for row in rows:
        if row.estimate > union_bound(3, p, row.r):
            return CriterionResult(
                "disease-model", False, 0.0,
                f"survival {row.estimate} above union bound at r={row.r}",
            )
    # chain combinatorics at small scales
    survivors = 0
    checked_pairs = []
    for r, n in ((2, 4), (3, 6), (4, 8)):
        g = tree_ball(3, r + 1)
        n_traced = 1000 if quick else 4000
        master = UpdateStream(61 + r)
        for t in range(n_traced):
            trace = disease_run_traced(g, p, r, n, 0, master.derive(f"d{t}"))
            if trace.value == STAR:
                survivors += 1
                chain = witness_chain(trace)
                if not h_graph_check(trace, chain, r, n):
                    return CriterionResult(
                        "disease-model", False, 0.0,
                        f"survivor without qualifying H-path at (r,n)=({r},{n})",
                    )
        checked_pairs.append((r, n))
    ok = survivors > 0
    detail = (
        "; ".join(f"r={row.r}: {row.survivals}/{row.trials}" for row in rows[:4])
        + f" ...; {survivors} traced survivors all carried qualifying H-paths"
    )
    return CriterionResult("disease-model", ok, 0.0, detail)


# -- 12 --------------------------------------------------------------------------


def criterion_end_to_end_pipeline(quick: bool) -> CriterionResult:
    """CFTP sample of the diluted field + cluster-wise resampling matches
    the exact plus measure in total variation."""
    g = tree_ball(3, 2)
    vol = tuple(sorted(g.interior))
    beta, q = 3.0, 0.95
    oracle = DilutedIsingOracle(g, vol, beta=beta, dilution=q)
    law = diluted_ising_cluster_law(g, vol, beta, q)
    exact = ising_measure(g, IsingParams(beta, frozenset(vol)))
    trials = 10_000 if quick else 100_000
    counts = np.zeros(1 << len(vol))
    master = UpdateStream(1999)
    for t in range(trials):
        stream = master.derive(f"e2e-{t}")
        res = cftp_sample(g, vol, oracle, stream)
        z = 0
        for j, v in enumerate(vol):
            z |= res.values[v] << j
        counts[compose_full(g, vol, z, law, stream.derive("aux"))] += 1
    tv = _tv(counts, exact.probs())
    return CriterionResult(
        "end-to-end-pipeline", tv <= 0.02, 0.0, f"TV {tv:.4f} at {trials} samples"
    )


CRITERIA = [
    ("two-point-exactness", criterion_two_point),
    ("dilution-conditional-identity", criterion_dilution_conditional_identity),
    ("ising-p-star-formula", criterion_ising_p_star_formula),
    ("dilution-holley-emergence", criterion_dilution_holley_emergence),
    ("closed-form-bound-consistency", criterion_bound_consistency),
    ("cutset-conditional-law", criterion_cutset_conditional_law),
    ("shearer-suite", criterion_shearer_suite),
    ("two-temperature-dilution", criterion_two_temperature_dilution),
    ("cftp-correctness", criterion_cftp_correctness),
    ("coding-radius-tail", criterion_coding_radius_tail),
    ("disease-model", criterion_disease_model),
    ("end-to-end-pipeline", criterion_end_to_end_pipeline),
]


def run_criterion(name: str, quick: bool = False) -> CriterionResult:
    func = dict(CRITERIA)[name]
    start = time.perf_counter()
    result = func(quick)
    result.elapsed = time.perf_counter() - start
    return result


def run_all(quick: bool = False, names=None) -> list[CriterionResult]:
    chosen = [n for n, _ in CRITERIA] if names is None else list(names)
    return [run_criterion(n, quick) for n in chosen]
