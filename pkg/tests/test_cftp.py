"""Bounding-chain CFTP: update rules, sweeps, backward composition, lazy
evaluation, coding radii, cluster-wise composition."""

import math

import numpy as np
import pytest

from domlab.cftp import (
    STAR,
    BernoulliOracle,
    DilutedIsingOracle,
    LazyBackwardChain,
    TriConfig,
    cftp_sample,
    coding_radius,
    coding_tail,
    compose_full,
    diluted_ising_cluster_law,
    diluted_ising_p_star,
    localized_value,
    psi_hat,
    sweep,
    tail_bound_constant,
    wilson_upper,
)
from domlab.domination import SiteMeasure, dilute_law, p_star
from domlab.errors import ConsistencyError, NonTermination, ResolutionError
from domlab.graph import path_graph, tree_ball
from domlab.ising import IsingParams, ising_measure
from domlab.streams import UpdateStream


def tv_distance(counts, probs):
    emp = counts / counts.sum()
    return 0.5 * float(np.abs(emp - probs).sum())


def diluted_setup(beta=3.0, q=0.95, radius=2):
    g = tree_ball(3, radius)
    vol = tuple(sorted(g.interior))
    oracle = DilutedIsingOracle(g, vol, beta=beta, dilution=q)
    exact = dilute_law(ising_measure(g, IsingParams(beta, frozenset(vol))), q)
    return g, vol, oracle, exact


class TestStream:
    def test_reproducible(self):
        s = UpdateStream(123)
        assert s.pair(5, 9) == UpdateStream(123).pair(5, 9)

    def test_open_interval(self):
        s = UpdateStream(7)
        for v in range(50):
            u, t = s.pair(v, 1)
            assert 0.0 < u < 1.0 and 0.0 < t < 1.0

    def test_derive_changes_values(self):
        s = UpdateStream(7)
        assert s.derive("a").pair(0, 1) != s.pair(0, 1)
        assert s.derive("a").seed != s.derive("b").seed

    def test_roughly_uniform(self):
        s = UpdateStream(99)
        vals = [s.pair(v, i)[0] for v in range(100) for i in range(20)]
        assert abs(np.mean(vals) - 0.5) < 0.02


class TestTriConfig:
    def test_precedes(self):
        a = TriConfig((0, 1), (1, 0))
        b = TriConfig((0, 1), (1, STAR))
        c = TriConfig((0, 1), (STAR, STAR))
        assert a.precedes(b) and b.precedes(c) and a.precedes(c)
        assert not b.precedes(a)

    def test_as_bits(self):
        assert TriConfig((0, 1, 2), (1, 0, 1)).as_bits() == 0b101
        with pytest.raises(ValueError):
            TriConfig((0,), (STAR,)).as_bits()


class TestPsiHat:
    def test_bernoulli_never_stars(self):
        oracle = BernoulliOracle((0, 1, 2), 0.5)
        y = TriConfig.all_stars((0, 1, 2))
        for u in (0.01, 0.49, 0.51, 0.99):
            out = psi_hat(y, 1, u, oracle)
            assert out.value(1) in (0, 1)

    def test_blocked_floor_rule(self):
        g, vol, oracle, _ = diluted_setup()
        y = TriConfig.all_stars(vol)
        out = psi_hat(y, vol[1], oracle.p_star * 0.5, oracle)
        assert out.value(vol[1]) == 1
        out = psi_hat(y, vol[1], oracle.p_star + 1e-6, oracle)
        assert out.value(vol[1]) == STAR

    def test_resolved_matches_exact_conditional(self):
        # star-free cluster: the resolved threshold equals the exact
        # conditional of the diluted law given the cluster pattern
        g, vol, oracle, exact = diluted_setup()
        root, c1, c2, c3 = vol
        y = TriConfig(vol, (STAR, 0, 1, 1))  # updating root; cluster {root, c1}
        cluster, saw_star = oracle._cluster(lambda w: y.value(w), root)
        assert cluster == {root, c1} and not saw_star
        q = oracle.resolve(lambda w: y.value(w), root)
        # oracle value vs brute conditional P(Z_root = 1 | Z_c1 = 0, Z_c2 = Z_c3 = 1)
        probs = exact.probs()
        pos = {v: j for j, v in enumerate(vol)}
        num = den = 0.0
        for cfg in range(16):
            if cfg >> pos[c1] & 1 or not cfg >> pos[c2] & 1 or not cfg >> pos[c3] & 1:
                continue
            den += probs[cfg]
            if cfg >> pos[root] & 1:
                num += probs[cfg]
        assert q == pytest.approx(num / den, abs=1e-12)

    def test_resolved_identical_to_unrestricted_conditional_scan(self):
        # wherever the chain resolves, the exact conditional over all
        # completions agrees (the refinement never invents values)
        g, vol, oracle, exact = diluted_setup()
        probs = exact.probs()
        pos = {v: j for j, v in enumerate(vol)}
        rng = np.random.default_rng(0)
        for _ in range(200):
            vals = tuple(rng.choice([0, 1, STAR]) for _ in vol)
            y = TriConfig(vol, vals)
            v = vol[int(rng.integers(len(vol)))]
            q = oracle.resolve(lambda w: y.value(w), v)
            if q is None:
                continue
            # conditionals over completions of the non-star pattern off v
            conds = []
            fixed = [
                (pos[w], y.value(w)) for w in vol if w != v and y.value(w) != STAR
            ]
            free = [pos[w] for w in vol if w != v and y.value(w) == STAR]
            for fill in range(1 << len(free)):
                num = den = 0.0
                for cfg in range(16):
                    if any(cfg >> j & 1 != b for j, b in fixed):
                        continue
                    if any(
                        cfg >> j & 1 != (fill >> i & 1) for i, j in enumerate(free)
                    ):
                        continue
                    den += probs[cfg]
                    if cfg >> pos[v] & 1:
                        num += probs[cfg]
                if den > 0:
                    conds.append(num / den)
            assert all(c == pytest.approx(q, abs=1e-10) for c in conds)


class TestSweepAndCftp:
    def test_empty_active_all_stars(self):
        oracle = BernoulliOracle((0, 1), 0.9)
        y = TriConfig((0, 1), (1, 0))
        out = sweep(y, (), UpdateStream(1), 1, oracle)
        assert out.values == (STAR, STAR)

    def test_bernoulli_sweep_resolves_everything(self):
        oracle = BernoulliOracle((0, 1, 2), 0.5)
        y = TriConfig.all_stars((0, 1, 2))
        out = sweep(y, (0, 1, 2), UpdateStream(1), 1, oracle)
        assert out.star_count() == 0

    def test_sweep_monotone_in_input(self):
        g, vol, oracle, _ = diluted_setup()
        rng = np.random.default_rng(3)
        for trial in range(200):
            stream = UpdateStream(trial)
            vals_lo = []
            vals_hi = []
            for _ in vol:
                a = int(rng.choice([0, 1, STAR]))
                vals_hi.append(a)
                vals_lo.append(int(rng.choice([0, 1])) if a == STAR else a)
            lo = TriConfig(vol, tuple(vals_lo))
            hi = TriConfig(vol, tuple(vals_hi))
            assert lo.precedes(hi)
            out_lo = sweep(lo, vol, stream, 1, oracle)
            out_hi = sweep(hi, vol, stream, 1, oracle)
            assert out_lo.precedes(out_hi)

    def test_bernoulli_cftp_is_block_factor(self):
        g = path_graph(3)
        oracle = BernoulliOracle((0, 1, 2), 0.9)
        stream = UpdateStream(5)
        res = cftp_sample(g, (0, 1, 2), oracle, stream)
        assert res.horizon == 1
        for v in (0, 1, 2):
            assert res.values[v] == (1 if stream.pair(v, 1)[0] <= 0.9 else 0)

    def test_single_site_resolves_immediately(self):
        g = tree_ball(3, 1)
        oracle = DilutedIsingOracle(g, (0,), beta=1.0, dilution=0.9)
        res = cftp_sample(g, (0,), oracle, UpdateStream(2))
        assert res.horizon == 1

    def test_threshold_enforced(self):
        g, vol, _, _ = diluted_setup()
        oracle = DilutedIsingOracle(g, vol, beta=3.0, dilution=0.5)
        with pytest.raises(ValueError):
            cftp_sample(g, vol, oracle, UpdateStream(1))

    def test_nontermination_report_below_threshold(self):
        g, vol, _, _ = diluted_setup()
        oracle = DilutedIsingOracle(g, vol, beta=0.3, dilution=0.45)
        with pytest.raises(NonTermination):
            cftp_sample(
                g, vol, oracle, UpdateStream(3), max_horizon=4,
                enforce_threshold=False,
            )

    def test_distribution_small_sample(self):
        # 20k seeds: TV well under 0.03 for the 16-state law
        g, vol, oracle, exact = diluted_setup()
        counts = np.zeros(16)
        master = UpdateStream(2024)
        for trial in range(20_000):
            res = cftp_sample(g, vol, oracle, master.derive(f"t{trial}"))
            bits = 0
            for j, v in enumerate(vol):
                bits |= res.values[v] << j
            counts[bits] += 1
        assert tv_distance(counts, exact.probs()) < 0.03


class TestLazyChain:
    def test_matches_direct_localized(self):
        g, vol, oracle, _ = diluted_setup(radius=3)
        v = 0
        for seed in range(300):
            stream = UpdateStream(seed)
            for r in (1, 2):
                horizon = 2 * r
                ball = g.ball(v, r)
                active = sorted(set(vol) & ball)
                y = TriConfig.all_stars(vol)
                for step in range(horizon, 0, -1):
                    y = sweep(y, active, stream, step, oracle)
                direct = y.value(v)
                lazy = localized_value(g, oracle, stream, v, r)
                assert direct == lazy

    def test_localized_below_full(self):
        # the localized run can only be less resolved than the full one
        g, vol, oracle, _ = diluted_setup()
        for seed in range(100):
            stream = UpdateStream(seed)
            res = cftp_sample(g, vol, oracle, stream)
            for r in (1, 2, 3):
                loc = localized_value(g, oracle, stream, 0, r,
                                      horizon=res.horizon)
                assert loc in (STAR, res.values[0])

    def test_resolution_monotone_in_radius(self):
        g, vol, oracle, _ = diluted_setup(radius=3)
        for seed in range(200):
            stream = UpdateStream(seed)
            resolved = False
            val = None
            for r in (1, 2, 3, 4):
                out = localized_value(g, oracle, stream, 0, r)
                if resolved:
                    assert out == val  # stability across radii
                if out != STAR:
                    resolved, val = True, out


class TestCodingTail:
    def test_bernoulli_radius_is_one(self):
        g = tree_ball(3, 2)
        oracle = BernoulliOracle(tuple(range(g.n)), 0.99)
        assert coding_radius(g, oracle, UpdateStream(1), 0, 5) == 1

    def test_constants(self):
        c, x = tail_bound_constant(3, 0.95)
        assert x == pytest.approx(0.4)
        assert c == pytest.approx(1.875)
        c_vac, x_vac = tail_bound_constant(3, 0.5)
        assert math.isinf(c_vac) and x_vac >= 1

    def test_wilson(self):
        assert wilson_upper(0, 1000) < 0.01
        assert wilson_upper(500, 1000) == pytest.approx(0.54, abs=0.01)

    def test_tail_rows_under_bound(self):
        g, vol, oracle, _ = diluted_setup(radius=3)
        rows = coding_tail(g, oracle, base_seed=7, v=0, r_values=(1, 2, 3),
                           trials=3000)
        for row in rows:
            assert row.wilson_upper <= row.bound
        ests = [row.estimate for row in rows]
        assert all(b <= a + 1e-12 for a, b in zip(ests, ests[1:]))


class TestComposeFull:
    def test_all_ones_passthrough(self):
        g, vol, oracle, _ = diluted_setup()
        law = diluted_ising_cluster_law(g, vol, 3.0, 0.95)
        out = compose_full(g, vol, (1 << len(vol)) - 1, law, UpdateStream(1))
        assert out == (1 << len(vol)) - 1

    def test_single_zero_cluster_distribution(self):
        g, vol, oracle, _ = diluted_setup(beta=1.0, q=0.7)
        law = diluted_ising_cluster_law(g, vol, 1.0, 0.7)
        # z = ones except the root: resample the root from its cluster law
        z = (1 << len(vol)) - 2  # root is bit 0
        want = law(frozenset({0}))[1]
        hits = 0
        master = UpdateStream(11)
        n = 20_000
        for t in range(n):
            out = compose_full(g, vol, z, law, master.derive(f"c{t}"))
            hits += out & 1
        assert abs(hits / n - want) < 0.01

    def test_end_to_end_small(self):
        # cftp sample of the diluted field + cluster resampling = plus state
        g, vol, oracle, _ = diluted_setup(beta=2.0, q=0.92)
        oracle = DilutedIsingOracle(g, vol, beta=2.0, dilution=0.92)
        law = diluted_ising_cluster_law(g, vol, 2.0, 0.92)
        exact = ising_measure(g, IsingParams(2.0, frozenset(vol)))
        counts = np.zeros(16)
        master = UpdateStream(31337)
        n = 20_000
        for t in range(n):
            stream = master.derive(f"e{t}")
            res = cftp_sample(g, vol, oracle, stream)
            z = 0
            for j, v in enumerate(vol):
                z |= res.values[v] << j
            x = compose_full(g, vol, z, law, stream.derive("aux"))
            counts[x] += 1
        assert tv_distance(counts, exact.probs()) < 0.03


class TestOracle:
    def test_p_star_value_reasonable(self):
        g, vol, oracle, exact = diluted_setup()
        assert oracle.p_star == pytest.approx(p_star(exact), abs=1e-12)
        assert 0.93 < oracle.p_star < 0.95

    def test_cluster_cap(self):
        g = tree_ball(3, 2)
        vol = tuple(sorted(g.interior))
        oracle = DilutedIsingOracle(g, vol, beta=1.0, dilution=0.9, cluster_cap=2)
        y = TriConfig(vol, (0, 0, 0, 0))
        with pytest.raises(ResolutionError):
            oracle.resolve(lambda w: y.value(w), vol[0])
