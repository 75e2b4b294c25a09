import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ckm.instance import (DimensionError, HeaderError, Instance, MetricError, TokenError,
                          VersionError, gen_gap_instance, gen_random, gen_suite_instance,
                          read_instance, validate_metric, write_instance)


def three_point(dab, dbc, dac):
    d = np.array([[0, dab, dac], [dab, 0, dbc], [dac, dbc, 0]], dtype=float)
    return Instance([2], 2, d, 1)


def test_degenerate_metric_is_clean():
    inst = Instance([1], 1, np.zeros((2, 2)), 1)
    rep = validate_metric(inst)
    assert rep.ok and rep.triangle_violations == []


def test_triangle_violation_reports_pair_via_and_slack():
    rep = validate_metric(three_point(5, 1, 10))
    assert rep.symmetric_ok
    assert rep.triangle_violations == [(0, 2, 1, pytest.approx(4.0))]


def test_asymmetry_detected():
    inst = three_point(1, 1, 1)
    inst.dist[0, 1] = 2
    assert not validate_metric(inst).symmetric_ok


def test_gap_instance_shape():
    inst = gen_gap_instance(2, 100)
    assert (inst.n_facilities, inst.n_clients, inst.k) == (4, 6, 3)
    assert list(inst.capacities) == [2, 2, 2, 2]
    assert validate_metric(inst).ok
    fc = inst.fc()
    # each group's facilities sit on its clients and L away from the others
    assert fc[0, :3].max() == 0 and fc[0, 3:].min() == 100
    assert fc[2, 3:].max() == 0 and fc[2, :3].min() == 100


@pytest.mark.parametrize("u,L", [(1, 10), (2, 0), (2, -1)])
def test_gap_instance_rejects_bad_parameters(u, L):
    with pytest.raises(ValueError):
        gen_gap_instance(u, L)


def test_random_is_deterministic():
    assert gen_random(5, 8, 3, seed=7) == gen_random(5, 8, 3, seed=7)
    assert gen_random(5, 8, 3, seed=7) != gen_random(5, 8, 3, seed=8)


@pytest.mark.parametrize("geometry", ["euclidean", "clustered"])
def test_random_metric_and_feasibility(geometry):
    for seed in range(10):
        inst = gen_random(5, 8, 3, cap_range=(1, 3), seed=seed, geometry=geometry)
        assert validate_metric(inst).ok
        assert (inst.k * inst.capacities).sum() >= 8
        assert inst.hard_feasible()


def test_random_rejects_impossible_capacity():
    with pytest.raises(ValueError):
        gen_random(5, 14, 4, cap_range=(1, 3))


def test_suite_instances_sizes():
    for seed in range(1, 51):
        inst = gen_suite_instance(seed)
        assert 5 <= inst.n_facilities <= 8 and 6 <= inst.n_clients <= 14 and 2 <= inst.k <= 4
        assert inst.hard_feasible() and validate_metric(inst).ok


def test_roundtrip_text():
    inst = gen_random(6, 9, 2, cap_range=(2, 6), seed=3)
    text = write_instance(inst)
    again = read_instance(text)
    assert again == inst
    assert write_instance(again) == text


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 8), st.integers(0, 10 ** 6))
def test_roundtrip_property(nf, nc, seed):
    k = min(nf, 2)
    inst = gen_random(nf, nc, k, cap_range=(1, nc), seed=seed)
    assert read_instance(write_instance(inst)) == inst


GOOD = "ckm v1\n1 1 1\n3\n0 2\n2 0\n"


@pytest.mark.parametrize("text,err,line", [
    ("", HeaderError, 1),
    ("kcm v1\n", HeaderError, 1),
    ("ckm v2\n1 1 1\n3\n0 2\n2 0\n", VersionError, 1),
    ("ckm v1\n1 1 1\n3 4\n0 2\n2 0\n", DimensionError, 3),
    ("ckm v1\n1 1 1\n3\n0 2\n", DimensionError, 4),
    ("ckm v1\n1 1 1\n3\n0 x\n2 0\n", TokenError, 4),
    ("ckm v1\n1 1 1\n3\n0 2\n3 0\n", MetricError, 4),
    ("ckm v1\n1 2 1\n2\n0 5 1\n5 0 1\n1 1 0\n", MetricError, 4),
])
def test_read_errors_carry_line(text, err, line):
    with pytest.raises(err) as info:
        read_instance(text)
    assert info.value.line == line


def test_read_good():
    inst = read_instance(GOOD)
    assert inst.fc()[0, 0] == 2 and inst.capacities[0] == 3
