import os
import time
from dataclasses import replace

import pytest

from salbhybrid.config import SolverConfig
from salbhybrid.errors import InfeasibleError
from salbhybrid.hybrid import NodeBounds, node_propagate, reduce_problem, round_solution
from salbhybrid.instance import check_assignment, feasible_pairs, oracle_optimum, read_instance
from salbhybrid.ip_model import build_ip


def removed_pairs(inst, store):
    return {(i, j) for j in inst.tasks for i in inst.eligible[j] if i not in store.dom[j]}


def test_chain_reduction(chain):
    reduction = reduce_problem(chain, "all")
    report = reduction.report
    assert report.initial_size == 9
    assert report.problems() == []
    assert report.after_lp >= 3
    assert removed_pairs(chain, reduction.store).isdisjoint(feasible_pairs(chain))
    assert report.lp_solves > 0


def test_nothing_to_reduce(make):
    inst = make([1, 1, 1], [100, 100])
    report = reduce_problem(inst, "all").report
    assert report.initial_size == report.after_cp == report.after_lp == 6


def test_lp_stage_detects_infeasibility(chain):
    with pytest.raises(InfeasibleError) as exc:
        reduce_problem(chain.with_stations(2), "standard")
    assert exc.value.stage == "lp"


def test_cp_stage_detects_infeasibility(make):
    inst = make([3, 3], [5], eligible={1: {1}, 2: {1}})
    with pytest.raises(InfeasibleError) as exc:
        reduce_problem(inst, "none")
    assert exc.value.stage == "cp"


@pytest.mark.parametrize("cut_mode", ["none", "standard", "all"])
def test_reduction_is_sound(random_instance, cut_mode):
    for seed in range(8):
        inst = random_instance(seed, tasks=7)
        reduction = reduce_problem(inst, cut_mode)
        assert reduction.report.problems() == []
        assert removed_pairs(inst, reduction.store).isdisjoint(feasible_pairs(inst))


def test_reduction_keeps_the_optimum(random_instance):
    for seed in range(8):
        inst = random_instance(seed, tasks=7)
        store = reduce_problem(inst, "all").store
        reduced = replace(inst, eligible=store.task_domains())
        assert oracle_optimum(reduced).stations_used == oracle_optimum(inst).stations_used


def test_all_cuts_continue_from_standard(random_instance):
    for seed in range(6):
        inst = random_instance(seed, tasks=7)
        first = reduce_problem(inst, "standard")
        second = reduce_problem(inst, "all", pool=first.pool, domains=first.store)
        assert first.report.initial_size >= first.report.after_cp >= first.report.after_lp
        assert second.report.after_lp <= first.report.after_lp


def test_reduction_without_lp_stage(chain):
    cfg = SolverConfig(reduction_passes=0)
    report = reduce_problem(chain, "all", cfg).report
    assert report.after_lp == report.after_cp
    assert report.lp_solves == 0


@pytest.fixture
def a_b(make):
    # A fixed on station 1, B free; 4 + 3 > 5
    return make([4, 3], [5, 5], eligible={1: {1}})


def test_node_propagate_at_root(a_b):
    model = build_ip(a_b)
    bounds = NodeBounds.from_model(model)
    tightened = node_propagate(a_b, bounds)
    assert tightened.upper[model.column(1, 2)] == 0.0
    assert tightened.upper[model.column(2, 2)] == 1.0
    assert all(tightened.upper <= bounds.upper)
    assert all(tightened.lower >= bounds.lower)


def test_node_propagate_after_branching(a_b):
    model = build_ip(a_b)
    bounds = NodeBounds.from_model(model).fixed(model.column(1, 2), 0.0)
    tightened = node_propagate(a_b, bounds)
    assert tightened.domains() == {1: {1}, 2: {2}}


def test_node_propagate_fails_on_empty_domain(a_b):
    model = build_ip(a_b)
    bounds = NodeBounds.from_model(model).fixed(model.column(1, 2), 0.0).fixed(model.column(2, 2), 0.0)
    assert node_propagate(a_b, bounds) is None


def test_node_bounds_forced_value(a_b):
    model = build_ip(a_b)
    bounds = NodeBounds.from_model(model).fixed(model.column(2, 2), 1.0)
    assert bounds.domains() == {1: {1}, 2: {2}}


def test_round_solution(make):
    inst = make([3, 3], [5, 5])
    point = {(1, 1): 1.0, (1, 2): 0.5, (2, 2): 0.5}
    assignment = round_solution(inst, point)
    assert assignment.station_of == {1: 1, 2: 2}
    assert check_assignment(inst, assignment) == []


def test_round_solution_without_completion(make):
    inst = make([3, 3], [5, 5])
    assert round_solution(inst, {(1, 1): 1.0, (1, 2): 1.0}) is None


def test_round_integral_point(chain):
    point = {(1, 1): 1.0, (2, 2): 1.0, (3, 3): 1.0}
    assert round_solution(chain, point).as_tuple() == (1, 2, 3)


def test_reduction_keeps_domains_after_deadline(data_dir):
    inst = read_instance(os.path.join(data_dir, "diamond.native"))
    reduction = reduce_problem(inst, "all", deadline=time.monotonic() - 1.0)
    report = reduction.report
    assert report.timed_out
    assert report.lp_solves == 0
    assert report.after_lp == report.after_cp
    assert removed_pairs(inst, reduction.store).isdisjoint(feasible_pairs(inst))


def test_cuts_on_first_lp_only(random_instance):
    cfg = SolverConfig(reduction_cuts="initial_lp")
    for seed in range(6):
        inst = random_instance(seed, tasks=7)
        reduction = reduce_problem(inst, "all", cfg)
        assert reduction.report.problems() == []
        assert not reduction.report.timed_out
        assert removed_pairs(inst, reduction.store).isdisjoint(feasible_pairs(inst))
