import numpy as np
import pytest

from salbhybrid.lifting import (build_lift_context, lift_coefficient, lift_gamma, lift_gamma_exhaustive,
                                prefix_capacity)


def test_prefix_capacity():
    assert prefix_capacity([5, 3, 3], 6) == {1: 1, 2: 1, 3: 2}
    assert prefix_capacity([7], 6) == {1: 0}
    assert prefix_capacity([], 6) == {}


def test_context_skips_pairs_ruled_out_by_precedence(make):
    inst = make([2, 2, 2], [5, 5, 5], edges=[(1, 2), (2, 3)])
    coeffs = {(3, 1): 1, (1, 3): 1, (2, 2): 1, (2, 1): 1}
    ctx = build_lift_context(inst, coeffs, (2, 2))
    # task 1 precedes 2 so it cannot sit on station 3; task 3 cannot sit on station 1
    assert ctx.a_star == frozenset({(2, 1)})
    assert ctx.permutations[2][0] == 1
    assert 2 not in ctx.permutations[2]
    # station 2 keeps capacity 5 - 2 for the others
    assert ctx.prefix_caps[2][2] == 1


def test_lift_coefficient_of_cover(make):
    # cover {1, 2, 3} of station 1 with t = 4, 4, 4 and CT = 10
    inst = make([4, 4, 4, 4], [10])
    coeffs = {(1, 1): 1, (1, 2): 1, (1, 3): 1}
    alpha, ctx = lift_coefficient(inst, coeffs, 2, (1, 4))
    # with task 4 on the station only one of the others still fits
    assert ctx.gamma == 1
    assert alpha == 1
    exhaustive, _ = lift_coefficient(inst, coeffs, 2, (1, 4), exhaustive=True)
    assert exhaustive == alpha


def test_lift_coefficient_is_never_negative(make):
    inst = make([1, 1, 1], [10, 10])
    alpha, _ = lift_coefficient(inst, {(1, 1): 1, (1, 2): 1}, 1, (2, 3))
    assert alpha == 0


def random_context(rng):
    n = int(rng.integers(3, 8))
    m = int(rng.integers(1, 4))
    times = [int(t) for t in rng.integers(1, 8, size=n)]
    capacity = max(times) + int(rng.integers(0, 8))
    edges = [(a, b) for a in range(1, n + 1) for b in range(a + 1, n + 1) if rng.random() < 0.2]
    pairs = [(i, j) for i in range(1, m + 1) for j in range(1, n + 1)]
    rng.shuffle(pairs)
    target = tuple(int(v) for v in pairs[0])
    chosen = pairs[1:1 + int(rng.integers(1, min(16, len(pairs) - 1) + 1))] if len(pairs) > 1 else []
    coeffs = {tuple(int(v) for v in p): int(rng.integers(1, 4)) for p in chosen}
    return (n, m, times, capacity, edges), coeffs, target


def test_flow_gamma_equals_exhaustive_gamma(make):
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(200):
        (n, m, times, capacity, edges), coeffs, target = random_context(rng)
        if not coeffs:
            continue
        inst = make(times, [capacity] * m, edges=edges)
        ctx = build_lift_context(inst, coeffs, target)
        assert len(ctx.a_star) <= 16
        assert lift_gamma(ctx, coeffs) == lift_gamma_exhaustive(ctx, coeffs)
        checked += 1
    assert checked > 150


def test_gamma_bounds_every_feasible_placement(make, random_instance):
    from salbhybrid.instance import iter_feasible_assignments
    rng = np.random.default_rng(17)
    for seed in range(8):
        inst = random_instance(seed, tasks=6)
        pairs = [(i, j) for j in inst.tasks for i in sorted(inst.eligible[j])]
        for _ in range(5):
            idx = rng.permutation(len(pairs))
            target = pairs[int(idx[0])]
            coeffs = {pairs[int(k)]: int(rng.integers(1, 3)) for k in idx[1:7]}
            ctx = build_lift_context(inst, coeffs, target)
            gamma = lift_gamma(ctx, coeffs)
            for a in iter_feasible_assignments(inst):
                if a.station_of[target[1]] != target[0]:
                    continue
                value = sum(c for (i, j), c in coeffs.items() if a.station_of.get(j) == i)
                assert value <= gamma


@pytest.mark.parametrize("alpha", [{}, {(1, 1): 0}])
def test_gamma_without_positive_terms_is_zero(make, alpha):
    inst = make([2, 2], [5])
    ctx = build_lift_context(inst, alpha, (1, 2))
    assert lift_gamma(ctx, alpha) == 0
    assert lift_gamma_exhaustive(ctx, alpha) == 0
