import math

import numpy as np
import pytest

from brwre.environment import EnvironmentField
from brwre.lattice import RationalVector, l1_norm, sub
from brwre.shape import (
    ShapeError,
    convex_hull,
    hausdorff_l1,
    iter_reachable,
    norm_estimate,
    passage_times,
    reachable_exactly,
    shape_polytope,
)

from _support import homogeneous_env, iid_env, law_of, random_env


def open_law_1d():
    return law_of(({(1,): 1}, 0.5), ({(-1,): 1}, 0.5))


def open_law_2d():
    return law_of(({(1, 0): 1}, 0.25), ({(-1, 0): 1}, 0.25),
                  ({(0, 1): 1}, 0.25), ({(0, -1): 1}, 0.25))


class TestPassageTimes:
    def test_fully_open_times_are_l1_norm(self):
        env = homogeneous_env(open_law_1d())
        ptm = passage_times(env, 0.1, 12)
        for x in range(-12, 13):
            assert ptm.t((x,)) == abs(x)

    def test_fully_open_planar(self):
        env = homogeneous_env(open_law_2d(), dimension=2)
        ptm = passage_times(env, 0.1, 8)
        for x in range(-8, 9):
            for y in range(-8, 9):
                if abs(x) + abs(y) <= 8:
                    assert ptm.t((x, y)) == abs(x) + abs(y)

    def test_origin_shift(self):
        env = homogeneous_env(open_law_1d())
        ptm = passage_times(env, 0.1, 6, origin=(4,))
        assert ptm.t((4,)) == 0
        assert ptm.t((7,)) == 3
        assert ptm.t((11,)) == math.inf  # outside the ball around (4,)

    def test_unreached_site_is_infinite(self):
        right = law_of(({(1,): 1}, 0.9), ({(-1,): 1}, 0.1))
        env = homogeneous_env(right)
        ptm = passage_times(env, 0.5, 10)
        assert ptm.t((3,)) == 3
        assert ptm.t((-1,)) == math.inf

    def test_bounds_when_all_unit_edges_open(self):
        env = random_env(np.random.default_rng(7))
        eps0 = env.conditions.epsilon0
        l0 = env.spec.step_set.l0_max
        ptm = passage_times(env, eps0 / 2, 20)
        for x, t in ptm.times.items():
            r = l1_norm(x)
            assert t >= r / l0 - 1e-12
            assert t <= r

    def test_delta_monotonicity(self):
        env = random_env(np.random.default_rng(8))
        grid = [0.0, 0.05, 0.1, 0.2, 0.4]
        maps = [passage_times(env, d, 15) for d in grid]
        sites = [(x,) for x in range(-15, 16)]
        for lo_m, hi_m in zip(maps, maps[1:]):
            for x in sites:
                assert lo_m.t(x) <= hi_m.t(x)

    def test_triangle_inequality(self):
        env = random_env(np.random.default_rng(9))
        eps0 = env.conditions.epsilon0
        delta = eps0 / 2
        base = passage_times(env, delta, 40)
        rng = np.random.default_rng(10)
        mids = [(int(m),) for m in rng.integers(-10, 11, size=8)]
        for x in mids:
            via = passage_times(env, delta, 20, origin=x)
            for z, tz in via.times.items():
                if l1_norm(z) > 40:
                    continue
                assert base.t(z) <= base.t(x) + tz + 1e-12

    def test_rejects_nonpositive_radius(self):
        env = homogeneous_env(open_law_1d())
        with pytest.raises(ShapeError):
            passage_times(env, 0.1, 0)


class TestBoundaryContact:
    def _walled(self):
        free = law_of(({(1,): 1, (-1,): 1}, 1.0))  # both edges carry mass 1
        blocked = open_law_1d()  # masses 0.5, closed once delta > 0.5
        spec = iid_env([free, blocked], [0.5, 0.5], 0).spec
        return EnvironmentField.from_index_function(
            spec, lambda x: 0 if abs(x[0]) <= 2 else 1)

    def test_no_contact_when_growth_stops_inside(self):
        # edges out of |x| > 2 need mass > 0.6; the outer law has only 0.5
        env = self._walled()
        ptm = passage_times(env, 0.6, 10)
        assert set(ptm.times) == {(x,) for x in range(-3, 4)}
        assert not ptm.boundary_contact

    def test_contact_when_frontier_hits_shell(self):
        env = self._walled()
        ptm = passage_times(env, 0.6, 3)
        assert ptm.boundary_contact

    def test_open_environment_reaches_shell(self):
        env = homogeneous_env(open_law_1d())
        assert passage_times(env, 0.1, 9).boundary_contact


class TestReachableSets:
    def test_parity_alternates(self):
        env = homogeneous_env(open_law_1d())
        for n, layer in enumerate(iter_reachable(env, 0.1, 6, (0,))):
            for x in layer:
                assert (x[0] - n) % 2 == 0

    def test_exactly_n_subset_of_w_n(self):
        env = random_env(np.random.default_rng(17))
        delta = env.conditions.epsilon0 / 2
        n = 8
        ptm = passage_times(env, delta, n * env.spec.step_set.l0_max)
        rn = reachable_exactly(env, delta, n, (0,))
        wn = set(ptm.reached(n))
        assert rn <= wn

    def test_first_layer_is_start(self):
        env = homogeneous_env(open_law_1d())
        layers = list(iter_reachable(env, 0.1, 0, (2,)))
        assert layers == [{(2,)}]


class TestNormEstimate:
    def test_half_speed_direction(self):
        env = homogeneous_env(open_law_1d())
        est = norm_estimate(env, 0.1, RationalVector.from_fractions(["1/2"]),
                            n_max=10)
        assert est.k0 == 2
        assert est.value == 0.5
        assert [j for j, _ in est.samples] == list(range(1, 11))
        assert all(v == 0.5 for _, v in est.samples)

    def test_unit_direction(self):
        env = homogeneous_env(open_law_1d())
        est = norm_estimate(env, 0.1, RationalVector.from_fractions(["1"]), 5)
        assert est.k0 == 1
        assert est.value == 1.0

    def test_unreachable_ray_is_infinite(self):
        right = law_of(({(1,): 1}, 0.9), ({(-1,): 1}, 0.1))
        env = homogeneous_env(right)
        est = norm_estimate(env, 0.5, RationalVector.from_fractions(["-1"]), 4)
        assert est.value == math.inf
        assert est.samples == ()

    def test_radius_override_too_small(self):
        env = homogeneous_env(open_law_1d())
        with pytest.raises(ShapeError):
            norm_estimate(env, 0.1, RationalVector.from_fractions(["1"]), 10,
                          radius=3)

    def test_zero_direction_rejected(self):
        env = homogeneous_env(open_law_1d())
        with pytest.raises(ShapeError):
            norm_estimate(env, 0.1, RationalVector.from_fractions(["0"]), 5)


class TestShapePolytope:
    def test_interval_shape(self):
        env = homogeneous_env(open_law_1d())
        ptm = passage_times(env, 0.1, 10)
        est = shape_polytope(ptm, 10)
        assert est.hull == ((-1.0,), (1.0,))

    def test_planar_shape_is_unit_cross_polytope(self):
        env = homogeneous_env(open_law_2d(), dimension=2)
        n = 12
        ptm = passage_times(env, 0.1, n)
        est = shape_polytope(ptm, n)
        assert set(est.hull) == {(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0),
                                 (0.0, -1.0)}
        assert hausdorff_l1(est.hull, [(1, 0), (0, 1), (-1, 0), (0, -1)]) == 0

    def test_zero_step_shape(self):
        env = homogeneous_env(open_law_1d())
        ptm = passage_times(env, 0.1, 5)
        est = shape_polytope(ptm, 0)
        assert est.hull == ((0.0,),)

    def test_n_beyond_radius_rejected(self):
        env = homogeneous_env(open_law_1d())
        ptm = passage_times(env, 0.1, 5)
        with pytest.raises(ShapeError):
            shape_polytope(ptm, 6)

    def test_normalized_sites_within_unit_ball(self):
        env = random_env(np.random.default_rng(27))
        delta = env.conditions.epsilon0 / 2
        n = 10
        ptm = passage_times(env, delta, n * env.spec.step_set.l0_max)
        est = shape_polytope(ptm, n)
        l0 = env.spec.step_set.l0_max
        for p in est.normalized_sites:
            assert sum(abs(c) for c in p) <= l0 + 1e-12


class TestHullAndDistance:
    def test_hull_1d(self):
        assert convex_hull([(0.0,), (2.0,), (1.0,)]) == [(0.0,), (2.0,)]
        assert convex_hull([(3.0,), (3.0,)]) == [(3.0,)]

    def test_hull_2d_square(self):
        pts = [(0, 0), (2, 0), (2, 2), (0, 2), (1, 1), (1, 0)]
        hull = convex_hull(pts)
        assert set(hull) == {(0, 0), (2, 0), (2, 2), (0, 2)}

    def test_hull_2d_collinear(self):
        hull = convex_hull([(0, 0), (1, 1), (2, 2), (3, 3)])
        assert set(hull) == {(0, 0), (3, 3)}

    def test_hull_3d_octahedron(self):
        pts = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0),
               (0, 0, 1), (0, 0, -1), (0, 0, 0)]
        hull = convex_hull(pts)
        assert set(hull) == set(pts) - {(0, 0, 0)}

    def test_hull_empty_rejected(self):
        with pytest.raises(ShapeError):
            convex_hull([])

    def test_hausdorff_known_values(self):
        assert hausdorff_l1([(0, 0)], [(3, 4)]) == 7.0
        assert hausdorff_l1([(0,), (1,)], [(0,), (1,)]) == 0.0
        # one-sided excess picks the farthest unmatched point
        assert hausdorff_l1([(0, 0), (5, 0)], [(0, 0)]) == 5.0

    def test_hausdorff_empty_rejected(self):
        with pytest.raises(ShapeError):
            hausdorff_l1([], [(0, 0)])
