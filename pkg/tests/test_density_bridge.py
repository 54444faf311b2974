import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from ftlnet.bridge import (DensityProfile, l1_distance, network_l1, profile_of, psi_average,
                           read_profiles, write_profiles)
from ftlnet.density import MassError, PiecewiseConstant, antidiscretize, discretize, vehicle_count
from ftlnet.micro import MicroParams, seed_vehicles
from ftlnet.network import TurningCoefficients, enumerate_paths

from conftest import line, make_state


def test_piecewise_basics():
    d = PiecewiseConstant.from_segments([(0, 1, 1.0), (2, 3, 0.5)])
    assert d.mass == pytest.approx(1.5)
    assert d(np.array([0.5, 1.5, 2.5, 3.5])).tolist() == [1.0, 0.0, 0.5, 0.0]
    np.testing.assert_allclose(d.cell_averages(0.0, 2.0, 2), [0.5, 0.25])


def test_discretize_uniform():
    assert discretize(PiecewiseConstant.constant(0.5, 0, 2), 0.5).tolist() == [1.0, 2.0]


def test_discretize_takes_largest_point_across_empty_stretch():
    d = PiecewiseConstant.from_segments([(0, 1, 1.0), (2, 3, 1.0)])
    np.testing.assert_allclose(discretize(d, 0.5), [0.5, 2.0, 2.5, 3.0])


def test_discretize_large_road():
    y = discretize(PiecewiseConstant.constant(0.5, 0, 4000), 1.0)
    assert len(y) == 2000
    np.testing.assert_allclose(y, 2.0 * np.arange(1, 2001), rtol=0, atol=1e-9)


def test_vehicle_count():
    assert vehicle_count(2.0, 0.5) == 4
    with pytest.raises(MassError):
        vehicle_count(2.2, 0.5)
    assert vehicle_count(2.2, 0.5, strict=False) == 4


def test_antidiscretize_example():
    c = antidiscretize([0.0, 1.0, 3.0], 0.5)
    np.testing.assert_allclose(c.edges, [0, 1, 3])
    np.testing.assert_allclose(c.values, [0.5, 0.25])
    with pytest.raises(ValueError):
        antidiscretize([0.0, 0.0, 1.0], 0.5)


@pytest.mark.parametrize("rho, ell", [(0.5, 1.0), (0.8, 0.2), (0.25, 0.125), (1.0, 0.5)])
def test_round_trip_uniform(rho, ell):
    length = 400.0
    y = discretize(PiecewiseConstant.constant(rho, 0, length), ell)
    c = antidiscretize(y, ell)
    assert np.max(np.abs(c.values - rho)) < 1e-12
    assert c.edges[-1] == pytest.approx(length, abs=1e-12)
    assert c.edges[0] == pytest.approx(ell / rho, abs=1e-9)


segments = st.lists(st.tuples(st.floats(0.5, 20.0), st.floats(0.05, 1.0)), min_size=1,
                    max_size=5)


@settings(max_examples=60, deadline=None)
@given(segs=segments, k=st.integers(2, 40))
def test_discretize_properties(segs, k):
    edges = np.concatenate([[0.0], np.cumsum([w for w, _ in segs])])
    d = PiecewiseConstant(edges, np.array([v for _, v in segs]))
    ell = d.mass / k
    y = discretize(d, ell)
    assert len(y) == k
    assert np.all(np.diff(y) > 0)
    assert y[-1] == pytest.approx(edges[-1])
    assert y[0] >= -1e-9
    # each gap encloses exactly one vehicle length of mass
    c = antidiscretize(y, ell)
    assert c.mass == pytest.approx((k - 1) * ell, rel=1e-9)
    cum = np.array([d._cumulative(v) for v in y])
    np.testing.assert_allclose(np.diff(cum), ell, rtol=1e-7, atol=1e-9)


def seeded_single_road(rho, ell, length=4000.0):
    net = line(length)
    state = seed_vehicles(net, enumerate_paths(net), {1: PiecewiseConstant.constant(rho, 0, length)},
                          TurningCoefficients(), MicroParams(ell=ell, dt=0.1))
    return net, state


@pytest.mark.parametrize("rho, ell", [(0.5, 1.0), (0.8, 0.5), (0.2, 0.25)])
def test_psi_of_seeded_uniform(rho, ell):
    net, state = seeded_single_road(rho, ell)
    prof = psi_average(state, net, 40.0)[1]
    assert np.max(np.abs(prof.values[1:-1] - rho)) < 1e-12
    assert prof.mass == pytest.approx(state.total_length)


def test_psi_cell_counts():
    net, state = seeded_single_road(0.5, 1.0)
    v = psi_average(state, net, 40.0)[1].values
    # half-open cells: the vehicle at x=40 belongs to cell 1; the one at
    # the end of the road stays in the last cell
    assert v[0] == pytest.approx(19 / 40)
    assert v[-1] == pytest.approx(21 / 40)


def test_psi_ignores_departed_vehicles():
    net = line(100.0)
    state = make_state(net, [0, 0, 0], [5.0, 50.0, 100.0], active=[True, True, False])
    v = psi_average(state, net, 10.0)[1].values
    assert v.sum() * 10.0 == pytest.approx(2.0)
    assert v[0] == v[5] == pytest.approx(0.1)


def test_l1_distance():
    a = DensityProfile(1, 10.0, [0.5, 0.5, 0.0])
    b = DensityProfile(1, 10.0, [0.25, 0.5, 0.5])
    assert l1_distance(a, b) == pytest.approx(7.5)
    assert l1_distance(a, a) == 0.0
    with pytest.raises(ValueError):
        l1_distance(a, DensityProfile(2, 10.0, [0, 0, 0]))
    with pytest.raises(ValueError):
        l1_distance(a, DensityProfile(1, 5.0, [0, 0, 0]))
    tab = network_l1({1: a, 2: b}, {1: b, 2: b})
    assert tab == pytest.approx({1: 7.5, 2: 0.0, "total": 7.5})


def test_negative_profile_rejected():
    with pytest.raises(ValueError):
        DensityProfile(1, 1.0, [0.1, -0.1])


def test_profile_csv_round_trip(tmp_path):
    profs = [DensityProfile(2, 40.0, [0.1, 1 / 3]), DensityProfile(1, 40.0, [0.5, 0.0])]
    f = tmp_path / "p.csv"
    write_profiles(f, profs)
    lines = f.read_text().splitlines()
    assert lines[0] == "road_id,cell_index,x_left,density"
    assert lines[1] == "1,0,0,0.5"
    assert lines[4] == "2,1,40,0.333333333333"
    back = read_profiles(f)
    assert back[2].dx == 40.0
    np.testing.assert_allclose(back[2].values, [0.1, 1 / 3], rtol=1e-11)


def test_profile_of_exact_averages():
    d = PiecewiseConstant.from_segments([(0, 15, 0.4)])
    np.testing.assert_allclose(profile_of(d, 1, 20.0, 10.0).values, [0.4, 0.2])
