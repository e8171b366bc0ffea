import time

import numpy as np
import pytest

from salbhybrid import cuts as cuts_module
from salbhybrid.config import SolverConfig
from salbhybrid.cuts import (ALL_FAMILIES, STANDARD_FAMILIES, CutKind, CutPool, cutting_plane_loop, families_for,
                             lift_cut, min_weight_cover, one_d_degree, predecessor_closure, separate_cover,
                             separate_extended_cover, separate_four_cycle, separate_hetero_two_cover,
                             separate_mic, separate_one_d_config, verify_certificate)
from salbhybrid.instance import iter_feasible_assignments
from salbhybrid.ip_model import build_ip, station_index_objective


@pytest.fixture
def four_cycle_case(make):
    inst = make([4, 5, 2, 4, 4], [10, 10], eligible={3: {1}, 4: {2}, 5: {2}})
    point = {(1, 1): 0.5, (1, 2): 0.8, (1, 3): 1.0,
             (2, 1): 0.5, (2, 2): 0.2, (2, 4): 1.0, (2, 5): 0.75}
    return inst, point


def test_families_for():
    assert families_for("none") == ()
    assert families_for("standard") == STANDARD_FAMILIES
    assert set(families_for("all")) == set(ALL_FAMILIES)
    with pytest.raises(ValueError):
        families_for("some")


def test_min_weight_cover_is_exact():
    items = [(1, 4, 0.0), (2, 5, 0.2), (3, 2, 0.5), (4, 6, 0.9)]
    assert min_weight_cover(items, 9) == frozenset({1, 2})
    assert min_weight_cover(items, 18) is None
    assert min_weight_cover(items, 0) == frozenset()


def test_cover_cut():
    cuts = separate_cover(1, {1: 4, 2: 5, 3: 2}, 10, {1: 1.0, 2: 1.0, 3: 0.5})
    assert len(cuts) == 1
    cut = cuts[0]
    assert cut.coeffs == {(1, 1): 1, (1, 2): 1, (1, 3): 1}
    assert cut.rhs == 2
    assert cut.certificate.cover == frozenset({1, 2, 3})


def test_no_cover_when_everything_fits():
    assert separate_cover(1, {1: 2, 2: 3}, 10, {1: 1.0, 2: 1.0}) == []


def test_one_d_degree():
    assert one_d_degree([3, 3, 3], 5, 10) == 2
    assert one_d_degree([3, 3], 3, 10) is None


def test_one_d_configuration_cut():
    times = {1: 3, 2: 3, 3: 3, 4: 5}
    cuts = separate_one_d_config(1, times, 10, {1: 1.0, 2: 0.6, 3: 0.6, 4: 0.5})
    assert len(cuts) == 1
    cut = cuts[0]
    assert cut.certificate.fitting == frozenset({1, 2, 3})
    assert cut.certificate.z == 4 and cut.certificate.d == 2
    assert cut.coeffs == {(1, 1): 1, (1, 2): 1, (1, 3): 1, (1, 4): 2}
    assert cut.rhs == 3


def test_minimal_induced_cover(make):
    inst = make([4, 3, 3], [8, 8], edges=[(1, 2)])
    point = {(1, 1): 0.5, (1, 2): 0.1, (1, 3): 0.1, (2, 1): 0.5, (2, 2): 0.9, (2, 3): 0.9}
    cuts = separate_mic(inst, 2, point)
    assert len(cuts) == 1
    cut = cuts[0]
    assert cut.certificate.cover == frozenset({2, 3})
    assert cut.certificate.closure == predecessor_closure(inst, {2, 3}) == frozenset({1, 2, 3})
    assert cut.coeffs == {(2, 2): 1, (2, 3): 1, (1, 1): -1}
    assert cut.rhs == 1
    assert cut.violation(point) == pytest.approx(0.3)
    assert verify_certificate(inst, cut) == []
    assert all(cut.satisfied_by(a) for a in iter_feasible_assignments(inst))


def test_four_cycle_cut(four_cycle_case):
    inst, point = four_cycle_case
    cuts = separate_four_cycle(inst, point)
    assert len(cuts) == 1
    cut = cuts[0]
    assert set(cut.coeffs) == {(1, 1), (1, 2), (1, 3), (2, 1), (2, 4), (2, 5), (2, 2)}
    assert set(cut.coeffs.values()) == {1}
    assert cut.rhs == 4
    assert cut.lhs(point) == pytest.approx(4.75)
    cert = cut.certificate
    assert (cert.u, cert.v) == (1, 2)
    assert cert.cover == frozenset({1, 2, 3}) and cert.second == frozenset({1, 4, 5})
    assert verify_certificate(inst, cut) == []


def test_four_cycle_right_hand_side_is_tight(make):
    # C_k = {1, 2, 3} on station 1, C_l = {1, 4} on station 2, u = 1, v = 2
    inst = make([3, 3, 5, 8], [10, 10, 10], eligible={3: {1}, 4: {2}})
    point = {(1, 1): 0.5, (1, 2): 0.6, (1, 3): 1.0, (2, 1): 0.5, (2, 2): 0.4, (2, 4): 1.0}
    cuts = separate_four_cycle(inst, point)
    assert len(cuts) == 1
    cut = cuts[0]
    assert cut.rhs == 3
    assert cut.violation(point) == pytest.approx(1.0)
    feasible = list(iter_feasible_assignments(inst))
    values = [sum(a for (i, j), a in cut.coeffs.items() if p.station_of.get(j) == i) for p in feasible]
    # 3 and 1 on station 1, 4 on station 2, 2 on station 3 reaches the bound
    assert max(values) == 3


def random_point(inst, rng):
    point = {}
    for j in inst.tasks:
        stations = sorted(inst.eligible[j])
        weights = rng.random(len(stations)) * (rng.random(len(stations)) < 0.6)
        if weights.sum() == 0:
            weights[int(rng.integers(len(stations)))] = 1.0
        weights = weights / weights.sum()
        for i, w in zip(stations, weights):
            point[(i, j)] = float(w)
    return point


def every_family(inst, point, lift_targets=3):
    cuts = []
    for k in inst.stations:
        times = {j: inst.task_time[j] for j in inst.station_tasks[k]}
        xk = {j: point.get((k, j), 0.0) for j in times}
        cuts.extend(separate_cover(k, times, inst.capacity[k], xk, tol=-1.0))
        cuts.extend(separate_one_d_config(k, times, inst.capacity[k], xk))
        cuts.extend(separate_mic(inst, k, point, tol=-1.0))
    cuts.extend([lift_cut(inst, c, point, lift_targets) for c in list(cuts) if c.kind != CutKind.MIC])
    cuts.extend(separate_four_cycle(inst, point, tol=-1.0, lift_targets=lift_targets))
    cuts.extend(separate_extended_cover(inst, point, tol=-1.0))
    cuts.extend(separate_hetero_two_cover(inst, point, tol=-1.0))
    return cuts


def check_validity(instances, seed):
    rng = np.random.default_rng(seed)
    emitted = 0
    for inst in instances:
        feasible = list(iter_feasible_assignments(inst))
        for _ in range(5):
            for cut in every_family(inst, random_point(inst, rng)):
                emitted += 1
                assert verify_certificate(inst, cut) == [], str(cut)
                assert all(cut.satisfied_by(a) for a in feasible), str(cut)
    return emitted


def test_cuts_are_valid_on_random_instances(random_instance, make):
    instances = [random_instance(seed, tasks=6, time_range=(2, 9)) for seed in range(12)]
    instances.append(make([5, 3, 4, 2, 6, 3], [8, 6, 10], edges=[(1, 3), (2, 4), (4, 5)],
                          eligible={1: {1, 2}, 3: {2, 3}, 5: {1, 3}}))
    assert check_validity(instances, seed=5) > 0


@pytest.mark.slow
def test_cuts_are_valid_on_many_random_instances(random_instance):
    instances = [random_instance(seed, tasks=8, time_range=(1, 9)) for seed in range(100)]
    assert check_validity(instances, seed=99) > 0


def test_lifted_cuts_keep_base_certificate(random_instance):
    rng = np.random.default_rng(3)
    lifted = []
    for seed in range(30):
        inst = random_instance(seed, tasks=7)
        point = random_point(inst, rng)
        lifted.extend(c for c in every_family(inst, point, lift_targets=10) if c.kind == CutKind.LIFTED)
    for cut in lifted:
        assert cut.lifted
        assert cut.certificate.kind in (CutKind.COVER, CutKind.ONE_D_CONFIG, CutKind.FOUR_CYCLE)
        assert all(cut.coeffs[p] >= 1 for p in cut.lifted)


def test_cut_pool_deduplicates(four_cycle_case):
    inst, point = four_cycle_case
    cut = separate_four_cycle(inst, point)[0]
    pool = CutPool()
    assert pool.add(cut)
    assert not pool.add(cut)
    assert cut in pool
    assert len(pool) == 1
    assert pool.count_by_kind() == {"four_cycle": 1}


def test_cutting_plane_loop_only_tightens(random_instance):
    cfg = SolverConfig()
    for seed in range(6):
        inst = random_instance(seed, tasks=7)
        plain = build_ip(inst)
        plain.apply_objective(station_index_objective(plain))
        base = plain.lp.solve()
        model = build_ip(inst)
        model.apply_objective(station_index_objective(model))
        pool = CutPool()
        solution, added = cutting_plane_loop(model, pool, cfg, ALL_FAMILIES)
        assert added == len(model.cut_rows)
        assert len(pool) == added
        assert solution.optimal
        assert solution.objective_value >= base.objective_value - 1e-6
        assert added <= cfg.cuts_per_node


def test_four_cycle_tries_best_candidates_first(four_cycle_case):
    inst, point = four_cycle_case
    assert separate_four_cycle(inst, point, max_candidates=0) == []
    cuts = separate_four_cycle(inst, point, max_candidates=1)
    assert len(cuts) == 1
    assert (cuts[0].certificate.u, cuts[0].certificate.v) == (1, 2)


def test_four_cycle_candidate_cap(random_instance, monkeypatch):
    calls = []
    original = cuts_module._four_cycle_cut

    def counting(*args, **kwargs):
        calls.append(args[2:6])
        return original(*args, **kwargs)

    monkeypatch.setattr(cuts_module, "_four_cycle_cut", counting)
    rng = np.random.default_rng(11)
    for seed in range(5):
        inst = random_instance(seed, tasks=9)
        point = random_point(inst, rng)
        calls.clear()
        separate_four_cycle(inst, point, tol=-1.0, max_candidates=3)
        assert len(calls) <= 3
        scores = [point[(k, u)] + point[(l, u)] + point[(k, v)] + point[(l, v)] for k, l, u, v in calls]
        assert scores == sorted(scores, reverse=True)


def test_cutting_plane_loop_respects_deadline(random_instance):
    inst = random_instance(4, tasks=8)
    model = build_ip(inst)
    model.apply_objective(station_index_objective(model))
    solution, added = cutting_plane_loop(model, CutPool(), SolverConfig(), ALL_FAMILIES,
                                         deadline=time.monotonic() - 1.0)
    assert solution.optimal
    assert added == 0
