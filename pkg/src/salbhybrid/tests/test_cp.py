import logging

from salbhybrid.cp import DomainStore, build_cp, label, propagate, select_task
from salbhybrid.instance import check_assignment, feasible_pairs


def test_artificial_tasks_absorb_capacity_gaps(make):
    inst = make([2], [5, 3])
    model = build_cp(inst)
    assert model.v_cap == 5
    assert model.horizon == 3
    assert model.n_bar == 3
    assert (model.res[model.artificial(1)], model.res[model.artificial(2)]) == (0, 2)
    assert model.initial[model.artificial(1)] == frozenset({1})
    assert model.initial[model.artificial(2)] == frozenset({2})
    assert all(model.duration(j) == 1 for j in range(1, model.n_bar + 1))


def test_single_station_model(make):
    model = build_cp(make([1, 1], [4]))
    assert model.horizon == 2
    assert model.n_bar == 3
    assert model.res[3] == 0


def test_timetable_prunes_against_fixed_task(make):
    inst = make([4, 3], [5, 5], eligible={1: {1}})
    model = build_cp(inst)
    store = model.new_store()
    assert propagate(model, store)
    assert store.dom[2] == {2}


def test_precedence_bounds(make):
    inst = make([1, 1], [5, 5, 5], edges=[(1, 2)], eligible={1: {2, 3}})
    model = build_cp(inst)
    store = model.new_store()
    assert propagate(model, store)
    assert store.dom[2] == {2, 3}
    assert store.dom[1] == {2, 3}


def test_overloaded_station_fails(make):
    inst = make([3, 3], [5], eligible={1: {1}, 2: {1}})
    model = build_cp(inst)
    assert not propagate(model, model.new_store())


def test_heterogeneous_capacity_is_enforced(make):
    # station 2 holds only 3, so a task of 4 must use station 1
    inst = make([4], [5, 3], eligible={1: {1, 2}})
    model = build_cp(inst)
    store = model.new_store()
    assert propagate(model, store)
    assert store.dom[1] == {1}


def test_trace_lines(make, caplog):
    inst = make([4, 3], [5, 5], eligible={1: {1}})
    model = build_cp(inst)
    with caplog.at_level(logging.DEBUG, logger="salbhybrid.cp"):
        propagate(model, model.new_store())
    assert "prune task=2 station=1 rule=timetable" in caplog.text


def test_store_restore(make):
    inst = make([1, 1], [5, 5])
    store = build_cp(inst).new_store()
    mark = store.checkpoint()
    store.assign(1, 2)
    store.remove(2, 1)
    store.remove(2, 2)
    assert store.failed
    store.restore(mark)
    assert not store.failed
    assert store.dom[1] == {1, 2} and store.dom[2] == {1, 2}
    assert store.size() == 4


def test_propagation_is_sound_and_idempotent(random_instance, make):
    cases = [random_instance(seed, tasks=7) for seed in range(15)]
    cases.append(make([5, 3, 4, 2, 6], [8, 6, 10], edges=[(1, 3), (2, 4), (4, 5)],
                      eligible={1: {1, 2}, 3: {2, 3}, 5: {1, 3}}))
    for inst in cases:
        model = build_cp(inst)
        store = model.new_store()
        assert propagate(model, store)
        pairs = feasible_pairs(inst)
        for i, j in pairs:
            assert i in store.dom[j]
        before = {j: set(d) for j, d in store.dom.items()}
        trail = len(store.trail)
        assert propagate(model, store)
        assert store.dom == before
        assert len(store.trail) == trail


def test_smaller_domains_never_grow(random_instance):
    inst = random_instance(4, tasks=7)
    model = build_cp(inst)
    full = model.new_store()
    propagate(model, full)
    narrow = model.new_store()
    j = max(inst.tasks, key=lambda j: len(narrow.dom[j]))
    narrow.remove(j, max(narrow.dom[j]))
    if propagate(model, narrow):
        assert all(narrow.dom[t] <= full.dom[t] for t in full.dom)


def test_label_chain(chain):
    model = build_cp(chain)
    result = label(model, model.new_store())
    assert result.found
    assert result.assignment.as_tuple() == (1, 2, 3)


def test_label_detects_infeasibility(make):
    model = build_cp(make([4, 4], [5]))
    result = label(model, model.new_store())
    assert result.status == "infeasible"
    assert result.assignment is None


def test_label_on_fixed_domains_needs_one_node(make):
    inst = make([2, 2], [5, 5], eligible={1: {1}, 2: {2}})
    model = build_cp(inst)
    result = label(model, model.new_store())
    assert result.found and result.nodes == 1


def test_label_respects_budget(random_instance):
    inst = random_instance(2, tasks=10)
    model = build_cp(inst)
    result = label(model, model.new_store(), node_limit=0)
    assert result.status == "budget_exceeded"


def test_labeled_assignments_respect_original_capacities(random_instance, make):
    cases = [random_instance(seed, tasks=8) for seed in range(10)]
    cases.append(make([5, 3, 4, 2, 6], [8, 6, 10], edges=[(1, 3), (2, 4), (4, 5)],
                      eligible={1: {1, 2}, 3: {2, 3}, 5: {1, 3}}))
    for inst in cases:
        model = build_cp(inst)
        store = model.new_store()
        before = {j: set(d) for j, d in store.dom.items()}
        result = label(model, store, node_limit=None, time_limit_ms=None)
        assert result.found
        assert check_assignment(inst, result.assignment) == []
        assert store.dom == before


def test_domain_store_from_domains():
    store = DomainStore({1: {1}, 2: set()}, 2)
    assert store.failed
    assert store.is_fixed(1) and store.value(1) == 1


def test_select_task_prefers_least_slack(make):
    # 2 only fits next to a heavy fixed task; 1 still has an empty station
    inst = make([3, 2, 6, 6], [9, 9, 9], eligible={1: {1, 2}, 2: {2, 3}, 3: {2}, 4: {3}})
    model = build_cp(inst)
    store = model.new_store()
    assert propagate(model, store)
    assert store.dom[1] == {1, 2} and store.dom[2] == {2, 3}
    assert select_task(model, store) == 2


def test_select_task_when_everything_is_fixed(make):
    inst = make([2, 2], [5, 5], eligible={1: {1}, 2: {2}})
    model = build_cp(inst)
    assert select_task(model, model.new_store()) is None


def test_label_zero_time_budget(chain):
    model = build_cp(chain)
    result = label(model, model.new_store(), node_limit=None, time_limit_ms=0.0)
    assert result.status == "budget_exceeded"
