import dataclasses
import math

import numpy as np
import pytest

from disperse.engine import ParticleSystem, RunResult, Status, lazy
from disperse.harness import (
    DEFAULT_GRID_OMEGA,
    DEFAULT_HYPERCUBE_OMEGA,
    AggregateStats,
    ExperimentSpec,
    ScanAxis,
    ScanSpec,
    aggregate,
    grid_step_budget,
    nearest_rank_quantiles,
    pair_coupling_audit,
    run_replicas,
    scan,
    validate_suite,
    wilson_interval,
)
from disperse.rng import derive_seed
from disperse.topology import TopologySpec


# -- interval and quantile helpers -------------------------------------------


def test_wilson_interval_reference_values():
    lo, hi = wilson_interval(0, 10)
    assert lo == 0.0
    assert hi == pytest.approx(0.2775, abs=1e-4)
    lo, hi = wilson_interval(8, 10)
    assert (lo, hi) == (
        pytest.approx(0.4902, abs=1e-4),
        pytest.approx(0.9433, abs=1e-4),
    )
    assert wilson_interval(0, 0) == (0.0, 1.0)
    lo, hi = wilson_interval(10, 10)
    assert hi == pytest.approx(1.0, abs=1e-12) and 0 < lo < 1


def test_wilson_interval_brackets_the_rate():
    for s, t in [(1, 7), (5, 9), (50, 100), (99, 100)]:
        lo, hi = wilson_interval(s, t)
        assert 0.0 <= lo <= s / t <= hi <= 1.0


def test_nearest_rank_quantiles():
    q = nearest_rank_quantiles(list(range(100, 0, -1)))  # 100..1 shuffled order
    assert q == {"min": 1, "p25": 25, "p50": 50, "p75": 75, "p95": 95, "max": 100}
    q4 = nearest_rank_quantiles([40, 10, 30, 20])
    assert (q4["p25"], q4["p50"], q4["p75"], q4["p95"]) == (10, 20, 30, 40)
    single = nearest_rank_quantiles([7])
    assert set(single.values()) == {7}
    empty = nearest_rank_quantiles([])
    assert all(v is None for v in empty.values())


def test_grid_step_budget_value():
    assert grid_step_budget(50, 20.0) == 391203
    assert grid_step_budget(50, 20.0) == math.ceil(2 * 20 * 50 * 50 * math.log(50))
    with pytest.raises(ValueError):
        grid_step_budget(1, 20.0)


# -- aggregation ---------------------------------------------------------------


def fake_result(status, t_disp=None, d_disp=0, maxd=0, meetings=0, seed=0):
    return RunResult(
        status=status,
        steps=t_disp or 100,
        t_disp=t_disp,
        d_disp=d_disp,
        max_distance_ever=maxd,
        meeting_total=meetings,
        walk_counts=np.zeros(2, dtype=np.int64),
        seed=seed,
        boundary_flag=status is Status.BOUNDARY_HIT,
    )


def test_aggregate_excludes_boundary_hits():
    results = [
        fake_result(Status.DISPERSED, t_disp=10, d_disp=3, maxd=4, meetings=2),
        fake_result(Status.DISPERSED, t_disp=20, d_disp=5, maxd=6, meetings=4),
        fake_result(Status.BUDGET_EXHAUSTED, maxd=9, meetings=6),
        fake_result(Status.BOUNDARY_HIT, maxd=99, meetings=1000),
    ]
    stats = aggregate(results)
    assert stats.replicas == 4
    assert stats.boundary_hits == 1
    assert stats.dispersed == 2
    assert stats.dispersal_fraction == pytest.approx(2 / 3)
    assert stats.t_disp["min"] == 10 and stats.t_disp["max"] == 20
    assert stats.d_disp["max"] == 5
    # Boundary run's distances and meetings must not leak in.
    assert stats.max_distance["max"] == 9
    assert stats.mean_meetings == pytest.approx((2 + 4 + 6) / 3)


def test_aggregate_no_dispersals():
    stats = aggregate([fake_result(Status.BUDGET_EXHAUSTED)] * 3)
    assert stats.dispersal_fraction == 0.0
    assert stats.t_disp["min"] is None
    row = stats.to_row()
    assert row["t_disp_p50"] is None
    assert list(row) == list(AggregateStats.COLUMNS)


def test_aggregate_single_particle_trivial_stats():
    exp = ExperimentSpec(topology=TopologySpec.grid(2), M=1, replicas=5, master_seed=3)
    _, stats = run_replicas(exp)
    assert stats.dispersal_fraction == 1.0
    assert set(stats.t_disp.values()) == {0}
    assert set(stats.d_disp.values()) == {0}


# -- experiment resolution --------------------------------------------------------


def test_resolve_fills_family_defaults():
    grid = ExperimentSpec(topology=TopologySpec.grid(2), M=10).resolve()
    assert grid.omega == DEFAULT_GRID_OMEGA
    cube = ExperimentSpec(topology=TopologySpec.hypercube(16), M=10).resolve()
    assert cube.omega == DEFAULT_HYPERCUBE_OMEGA
    tree = ExperimentSpec(topology=TopologySpec.tree(3), M=4096).resolve()
    assert tree.topology.leaf_depth == 37
    comp = ExperimentSpec(topology=TopologySpec.complete(10), M=4).resolve()
    assert comp.omega is None
    # Resolution is idempotent.
    assert grid.resolve() == grid


def test_resolve_enforces_hypercube_cap():
    # sqrt(2^4)/2 = 2 particles at most.
    exp = ExperimentSpec(topology=TopologySpec.hypercube(4), M=10)
    with pytest.raises(ValueError, match="cap"):
        exp.resolve()
    override = dataclasses.replace(exp, omega=0.1)
    assert override.resolve().M == 10


def test_experiment_validation_errors():
    good = ExperimentSpec(topology=TopologySpec.complete(10), M=4)
    good.validate()
    for bad in (
        dataclasses.replace(good, M=0),
        dataclasses.replace(good, budget=0),
        dataclasses.replace(good, replicas=0),
        dataclasses.replace(good, omega=-1.0),
    ):
        with pytest.raises(ValueError):
            bad.validate()


# -- replication ---------------------------------------------------------------


def base_exp(**kw):
    kw.setdefault("topology", TopologySpec.complete(40))
    kw.setdefault("M", 15)
    kw.setdefault("replicas", 8)
    kw.setdefault("master_seed", 99)
    return ExperimentSpec(**kw)


def test_replica_seeds_derive_from_master():
    results, _ = run_replicas(base_exp())
    assert [r.seed for r in results] == [derive_seed(99, i) for i in range(8)]


def test_parallelism_does_not_change_results():
    seq, seq_stats = run_replicas(base_exp(), parallelism=1)
    par, par_stats = run_replicas(base_exp(), parallelism=4)
    assert [r.to_record() for r in seq] == [r.to_record() for r in par]
    assert seq_stats == par_stats


def test_run_replicas_stats_match_aggregate():
    results, stats = run_replicas(base_exp())
    assert stats == aggregate(results)


# -- scans -----------------------------------------------------------------------


def test_density_scan_sets_particle_counts():
    base = base_exp(replicas=3)
    points = scan(ScanSpec(base=base, axis=ScanAxis.DENSITY, grid=(0.1, 0.3, 0.5)))
    assert [pt.experiment.M for pt in points] == [4, 12, 20]
    assert [pt.value for pt in points] == [0.1, 0.3, 0.5]
    # Point seeds are derived, so later points do not depend on earlier ones.
    assert [pt.experiment.master_seed for pt in points] == [
        derive_seed(99, i) for i in range(3)
    ]


def test_lazy_p_scan_sets_variant():
    base = base_exp(replicas=2, variant=lazy(0.5))
    points = scan(ScanSpec(base=base, axis=ScanAxis.LAZY_P, grid=(0.25, 1.0)))
    assert [pt.experiment.variant.p for pt in points] == [0.25, 1.0]
    assert all(pt.experiment.variant.kind == "lazy" for pt in points)


def test_tree_k_and_grid_dim_scans():
    treebase = base_exp(topology=TopologySpec.tree(3), M=27, replicas=2)
    pts = scan(ScanSpec(base=treebase, axis=ScanAxis.TREE_K, grid=(3.0, 4.0)))
    assert [pt.experiment.topology.k for pt in pts] == [3, 4]
    gridbase = base_exp(topology=TopologySpec.grid(2), M=6, replicas=2)
    pts = scan(ScanSpec(base=gridbase, axis=ScanAxis.GRID_DIM, grid=(2.0, 3.0)))
    assert [pt.experiment.topology.dim for pt in pts] == [2, 3]


def test_scan_validation_errors():
    base = base_exp()
    with pytest.raises(ValueError):
        ScanSpec(base=base, axis=ScanAxis.DENSITY, grid=()).validate()
    with pytest.raises(ValueError):
        ScanSpec(base=base, axis=ScanAxis.DENSITY, grid=(0.5, 0.3)).validate()
    with pytest.raises(ValueError):
        ScanSpec(base=base, axis=ScanAxis.LAZY_P, grid=(0.0, 0.5)).validate()
    with pytest.raises(ValueError):
        ScanSpec(base=base, axis=ScanAxis.TREE_K, grid=(3.0, 4.0)).validate()
    with pytest.raises(ValueError):
        ScanSpec(base=base, axis=ScanAxis.TREE_K, grid=(3.5,)).validate()
    path_base = base_exp(topology=TopologySpec.path(), M=6)
    with pytest.raises(ValueError):
        ScanSpec(base=path_base, axis=ScanAxis.DENSITY, grid=(0.5,)).validate()


# -- coupling audit ----------------------------------------------------------------


def recorded_run(spec, seed, budget=2000, variant=None):
    kw = {"variant": variant} if variant else {}
    ps = ParticleSystem(spec, 2, seed=seed, **kw)
    ps.record_trajectories(True)
    return ps.run(budget)


def test_coupling_audit_line_example():
    r = recorded_run(TopologySpec.path(), seed=11)
    assert pair_coupling_audit(r.trajectories) == (3, 3)


def test_coupling_audit_counts_empty_prefix():
    # Both particles start together, so the empty difference walk is a
    # return and meetings start at 1; the bound holds from step zero.
    for spec in (TopologySpec.path(), TopologySpec.grid(2), TopologySpec.hypercube(6)):
        for seed in range(25):
            r = recorded_run(spec, seed)
            meetings, combined = pair_coupling_audit(r.trajectories)
            assert meetings >= 1
            assert combined >= meetings


def test_coupling_audit_rejects_bad_inputs():
    r = recorded_run(TopologySpec.path(), seed=0)
    with pytest.raises(ValueError):
        pair_coupling_audit(r.trajectories, 0, 0)
    with pytest.raises(ValueError):
        pair_coupling_audit(r.trajectories, 0, 5)
    star = ParticleSystem(TopologySpec.star(4), 2, seed=1)
    star.record_trajectories(True)
    rs = star.run(100)
    with pytest.raises(ValueError, match="not defined"):
        pair_coupling_audit(rs.trajectories)


# -- validation suite ----------------------------------------------------------------


def test_validate_suite_quick_passes():
    report = validate_suite(quick=True)
    assert report.passed, str(report)
    assert len(report.checks) == 14
    assert not report.failures
    text = str(report)
    assert "14/14 checks passed" in text
    doc = report.to_json()
    assert doc["passed"] is True
    assert {c["name"] for c in doc["checks"]} == {c.name for c in report.checks}
