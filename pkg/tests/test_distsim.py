from collections import Counter

import numpy as np
import pytest

from jhsvd.blockkernel import Signature
from jhsvd.distsim import (
    FAST,
    SLOW,
    MappingError,
    Topology,
    optimize_mapping,
    run_distributed,
)
from jhsvd.driver import SolverConfig, block_jacobi
from jhsvd.strategy import make_strategy
from jhsvd.testgen import SpectrumSpec, gen_factor, gen_spectrum, relative_error

BO = SolverConfig(variant="block-oriented")


@pytest.fixture(scope="module")
def fixture128():
    lam = gen_spectrum(SpectrumSpec(3, 128, seed=42))
    g, j = gen_factor(lam, seed=43)
    return lam, g, j


class TestTopology:
    def test_xor_rule(self):
        t = Topology(4)
        assert t.link_class(0, 1) == FAST
        assert t.link_class(2, 3) == FAST
        assert t.link_class(0, 2) == SLOW
        assert t.link_class(1, 3) == SLOW

    def test_self_link_rejected(self):
        with pytest.raises(ValueError):
            Topology(2).link_class(1, 1)


class TestOptimizeMapping:
    def test_g1_trivial(self):
        m = optimize_mapping(make_strategy("rrow", 2), Topology(1))
        assert m.fast_exchanges == 0
        assert m.assignments == ((((1, 2),),))

    def test_g4_br_equivalent_reaches_three(self):
        m = optimize_mapping(make_strategy("rrow", 8), Topology(4))
        assert m.fast_exchanges == 3

    def test_g2_all_fast(self):
        # with two workers every link is the fast one
        m = optimize_mapping(make_strategy("rrow", 4), Topology(2))
        assert m.fast_exchanges == len(m.assignments)

    def test_every_worker_keeps_one_column(self):
        m = optimize_mapping(make_strategy("rrow", 8), Topology(4))
        s = len(m.assignments)
        for step in range(s):
            cur = m.assignments[step]
            nxt = m.assignments[(step + 1) % s]
            for i in range(4):
                assert len(set(cur[i]) & set(nxt[i])) == 1

    def test_assignments_cover_strategy_steps(self):
        strat = make_strategy("rrow", 8)
        m = optimize_mapping(strat, Topology(4))
        for step, assigned in zip(strat.steps, m.assignments):
            assert set(step) == set(assigned)

    def test_stable_under_rerun(self):
        a = optimize_mapping(make_strategy("rrow", 8), Topology(4))
        b = optimize_mapping(make_strategy("rrow", 8), Topology(4))
        assert a == b

    def test_order_mismatch(self):
        with pytest.raises(MappingError):
            optimize_mapping(make_strategy("rrow", 8), Topology(2))


class TestRunDistributed:
    def test_g1_bitwise_equals_driver(self, fixture128):
        _, g, j = fixture128
        res_d = block_jacobi(g, j, BO)
        res_1, trace = run_distributed(g, j, 1, BO)
        assert np.array_equal(res_1.sigma, res_d.sigma)
        assert np.array_equal(res_1.u, res_d.u)
        assert np.array_equal(res_1.v, res_d.v)
        assert res_1.stats == res_d.stats
        assert trace == []

    @pytest.mark.parametrize("g_workers", [2, 4])
    def test_agrees_with_single_node(self, fixture128, g_workers):
        lam, g, j = fixture128
        res_d = block_jacobi(g, j, BO)
        res_g, _ = run_distributed(g, j, g_workers, BO)
        assert res_g.converged
        dev = np.abs(res_g.sigma / res_d.sigma - 1).max()
        assert dev <= 1e-12
        assert relative_error(res_g.sigma, j, lam) <= 1e-12

    def test_deterministic_across_reruns(self, fixture128):
        _, g, j = fixture128
        a, _ = run_distributed(g, j, 2, BO)
        b, _ = run_distributed(g, j, 2, BO)
        assert np.array_equal(a.sigma, b.sigma)
        assert np.array_equal(a.v, b.v)

    def test_one_message_per_worker_per_step(self, fixture128):
        _, g, j = fixture128
        res, trace = run_distributed(g, j, 4, BO, collect_trace=True)
        per_step = Counter((r.sweep, r.step) for r in trace)
        steps_per_sweep = 2 * 4 - 1
        assert len(per_step) == res.block_sweeps * steps_per_sweep
        assert all(count == 4 for count in per_step.values())

    def test_trace_links_match_topology(self, fixture128):
        _, g, j = fixture128
        topo = Topology(4)
        _, trace = run_distributed(g, j, 4, BO, collect_trace=True)
        for rec in trace:
            assert rec.link == topo.link_class(rec.worker, rec.dest)

    def test_conservation_of_block_columns(self, fixture128):
        # every step moves each block-column id exactly once overall
        _, g, j = fixture128
        _, trace = run_distributed(g, j, 4, BO, collect_trace=True)
        for (sweep, step) in {(r.sweep, r.step) for r in trace}:
            sent = [r.column for r in trace if (r.sweep, r.step) == (sweep, step)]
            assert len(sent) == len(set(sent))

    def test_j_orthogonality(self, fixture128):
        _, g, j = fixture128
        res, _ = run_distributed(g, j, 4, BO)
        jv = np.diag(j.as_vector())
        assert np.abs(res.v.T @ jv @ res.v - jv).max() <= 1e-12

    def test_full_block_variant(self, fixture128):
        lam, g, j = fixture128
        cfg = SolverConfig(variant="full-block")
        res, _ = run_distributed(g, j, 2, cfg)
        assert res.converged
        assert relative_error(res.sigma, j, lam) <= 1e-12

    def test_solve_path(self, fixture128):
        lam, g, j = fixture128
        cfg = SolverConfig(
            variant="block-oriented", solve_v=True, accumulate_v=False
        )
        res, _ = run_distributed(g, j, 2, cfg)
        assert res.converged
        assert relative_error(res.sigma, j, lam) <= 1e-12
        assert res.v is not None

    def test_hybrid_early_stop_runs(self, fixture128):
        lam, g, j = fixture128
        cfg = SolverConfig(variant="full-block")
        res, _ = run_distributed(g, j, 2, cfg, hybrid_early_stop=True)
        # the heuristic may trade accuracy for balance but must stay sane
        assert relative_error(res.sigma, j, lam) <= 1e-9

    def test_divisibility_checks(self):
        g = np.eye(100, order="F")
        with pytest.raises(ValueError):
            run_distributed(g, None, 3, BO)
        with pytest.raises(ValueError):
            run_distributed(np.eye(64, order="F"), None, 4, BO)  # 32 % width
