import numpy as np
import pytest
from hypothesis import given, strategies as st

from nspinn.errors import ContractViolation
from nspinn.sampling import (BatchStream, Cylinder, DomainSpec, PointPool, RoleBatch, batches,
                             build_pool, sample_boundary, sample_interior, sample_pin)

RE200 = DomainSpec(-8.0, 25.0, -8.0, 8.0, 0.0, 200.0, Cylinder(0.0, 0.0, 0.5))
RE40 = DomainSpec(-10.0, 30.0, -10.0, 10.0, 0.0, 20.0, Cylinder(0.0, 0.0, 0.5))

# chi-square 0.999 quantile, 3 degrees of freedom
CHI2_3DOF_999 = 16.266


def test_interior_excludes_hole_and_is_uniform():
    n = 100_000
    pts = sample_interior(RE200, n, seed=11)
    assert pts.shape == (n, 3)
    assert np.all(pts[:, 0] ** 2 + pts[:, 1] ** 2 >= 0.25)
    assert np.all((pts[:, 2] >= 0.0) & (pts[:, 2] <= 200.0))
    # quadrants about the rectangle centre; the hole sits in the left half
    cx, cy = 8.5, 0.0
    q = 2 * (pts[:, 0] > cx) + (pts[:, 1] > cy)
    counts = np.bincount(q, minlength=4)
    # each quadrant is 16.5 x 8; the two left ones each lose half of the hole
    areas = np.full(4, 16.5 * 8.0)
    areas[:2] -= np.pi * 0.25 / 2
    expected = n * areas / areas.sum()
    assert np.max(np.abs(counts - expected) / expected) < 0.02
    assert np.sum((counts - expected) ** 2 / expected) < CHI2_3DOF_999


def test_steady_domain_points_have_no_time():
    dom = DomainSpec(-1, 1, -1, 1)
    assert dom.steady
    assert sample_interior(dom, 10, 0).shape == (10, 2)
    assert sample_boundary(dom, "top", 10, 0).shape == (10, 2)


def test_sampling_is_deterministic_per_seed():
    a = sample_interior(RE40, 500, 3)
    np.testing.assert_array_equal(a, sample_interior(RE40, 500, 3))
    assert not np.array_equal(a, sample_interior(RE40, 500, 4))


@pytest.mark.parametrize("segment,axis,value", [("inlet", 0, -10.0), ("outlet", 0, 30.0),
                                                ("bottom", 1, -10.0), ("top", 1, 10.0)])
def test_rectangle_segments_are_exact(segment, axis, value):
    pts = sample_boundary(RE40, segment, 1000, 5)
    assert np.all(pts[:, axis] == value)
    other = pts[:, 1 - axis]
    lo, hi = (RE40.ymin, RE40.ymax) if axis == 0 else (RE40.xmin, RE40.xmax)
    assert np.all((other >= lo) & (other <= hi))


def test_cylinder_points_on_circle():
    pts = sample_boundary(RE40, "cylinder", 5000, 1)
    assert np.max(np.abs(pts[:, 0] ** 2 + pts[:, 1] ** 2 - 0.25)) < 1e-12


def test_cylinder_angles_uniform():
    n, bins = 64 * 1000, 64
    pts = sample_boundary(RE40, "cylinder", n, 2)
    theta = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * np.pi)
    counts = np.bincount(np.minimum((theta / (2 * np.pi) * bins).astype(int), bins - 1), minlength=bins)
    # multinomial: each bin ~ Bin(n, 1/64); chi-square over 64 bins has mean 63, var 126
    chi2 = np.sum((counts - n / bins) ** 2 / (n / bins))
    assert abs(chi2 - 63.0) < 3.0 * np.sqrt(126.0)
    p = 1.0 / bins
    assert np.all(np.abs(counts - n * p) < 5.0 * np.sqrt(n * p * (1 - p)))


def test_initial_slice():
    pts = sample_boundary(RE40, "initial", 1000, 0)
    assert np.all(pts[:, 2] == 0.0)
    assert np.all(pts[:, 0] ** 2 + pts[:, 1] ** 2 >= 0.25)


def test_initial_slice_of_shifted_window():
    pts = sample_boundary(RE200.with_time(125.0, 200.0), "initial", 10, 0)
    assert np.all(pts[:, 2] == 125.0)


def test_errors():
    with pytest.raises(ContractViolation):
        sample_boundary(RE40, "left", 10, 0)
    with pytest.raises(ContractViolation):
        sample_boundary(DomainSpec(0, 1, 0, 1, 0, 1), "cylinder", 10, 0)
    with pytest.raises(ContractViolation):
        sample_boundary(DomainSpec(0, 1, 0, 1), "initial", 10, 0)
    with pytest.raises(ContractViolation):
        sample_interior(RE40, 0, 0)
    with pytest.raises(ContractViolation):
        DomainSpec(0, 1, 0, 1, hole=Cylinder(0.5, 0.5, 2.0))
    with pytest.raises(ContractViolation):
        DomainSpec(1, 0, 0, 1)
    with pytest.raises(ContractViolation):
        DomainSpec(0, 1, 0, 1, 2.0, 1.0)


def test_normals():
    assert RE40.normal("inlet") == (-1.0, 0.0)
    assert RE40.normal("outlet") == (1.0, 0.0)
    assert RE40.normal("top") == (0.0, 1.0)
    n = RE40.normal("cylinder")(np.array([[0.5, 0.0, 1.0], [0.0, -0.5, 1.0]]))
    np.testing.assert_allclose(n, [[-1.0, 0.0], [0.0, 1.0]])


def test_pin_points():
    pts = sample_pin(RE40, (29.0, 0.0), 8, 0)
    assert np.all(pts[:, :2] == [29.0, 0.0])


# -- batching ------------------------------------------------------------


def _index_pool(n, role="interior"):
    return PointPool({role: RoleBatch(np.arange(n, dtype=float)[:, None])})


def test_pool_of_eight_partitioned_by_two_batches():
    pool = _index_pool(8)
    got = [b["interior"].points[:, 0] for b in batches(pool, {"interior": 4}, 2, seed=0)]
    assert sorted(np.concatenate(got).tolist()) == list(range(8))


@given(st.integers(1, 50), st.integers(1, 20), st.integers(1, 4), st.integers(0, 1000))
def test_each_point_seen_exactly_k_times(per_batch, n_batches, k, seed):
    size = per_batch * n_batches
    pool = _index_pool(size)
    seen = np.zeros(size, dtype=int)
    for b in batches(pool, {"interior": per_batch}, k * n_batches, seed):
        np.add.at(seen, b["interior"].points[:, 0].astype(int), 1)
    assert np.all(seen == k)


def test_forty_uses_at_scaled_paper_ratio():
    # pool/batch = 1e4 and 4e5 iterations in the full runs; here scaled by 1/1000
    batch, iters = 8, 400
    pool = _index_pool(batch * iters // 40)
    seen = np.zeros(len(pool.roles["interior"].points), dtype=int)
    for b in batches(pool, {"interior": batch}, iters, seed=1):
        np.add.at(seen, b["interior"].points[:, 0].astype(int), 1)
    assert np.all(seen == 40)


def test_stream_is_reproducible_and_resumable():
    pool = _index_pool(37)
    a = [b["interior"].points for b in batches(pool, {"interior": 5}, 30, seed=2)]
    b = [b["interior"].points for b in batches(pool, {"interior": 5}, 30, seed=2)]
    c = [b["interior"].points for b in batches(pool, {"interior": 5}, 10, seed=2, start=20)]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    for x, y in zip(a[20:], c):
        np.testing.assert_array_equal(x, y)


def test_stream_errors():
    pool = _index_pool(4)
    with pytest.raises(ContractViolation):
        BatchStream(pool, {"interior": 0}, 0)
    with pytest.raises(ContractViolation):
        BatchStream(pool, {"interior": 5}, 0)
    with pytest.raises(ContractViolation):
        BatchStream(pool, {"top": 1}, 0)


def test_build_pool_roles_and_values():
    sizes = {"interior": 50, "inlet": 10, "cylinder": 7, "initial": 9}
    extra = {"data": RoleBatch(np.zeros((4, 3)), np.ones((4, 3)))}
    pool = build_pool(RE40, sizes, seed=9, extra=extra)
    assert pool.sizes == {**sizes, "data": 4}
    stream = BatchStream(pool, {"interior": 5, "data": 2}, 0)
    b = stream[0]
    assert b["data"].values.shape == (2, 3)
    assert b["interior"].values is None
    again = build_pool(RE40, sizes, seed=9, extra=extra)
    for role in sizes:
        np.testing.assert_array_equal(pool.roles[role].points, again.roles[role].points)


def test_pin_pool_needs_location():
    with pytest.raises(ContractViolation):
        build_pool(RE40, {"pin": 4}, 0)
