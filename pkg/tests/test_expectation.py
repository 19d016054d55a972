import math

import numpy as np
import pytest

from brwre.expectation import (
    FactorizedEnv,
    LogMassField,
    SolverError,
    check_anderson_equation,
    expected_total,
    forward_layer,
    iter_layers,
    read_layer_binary,
    read_layer_csv,
    solve,
    write_layer_binary,
    write_layer_csv,
)
from brwre.lattice import StepSet, add

from _support import (
    doubling_law,
    drift_law,
    homogeneous_env,
    iid_env,
    law_of,
    mean2_law,
    random_env,
)


def brute_forward(env, start, n):
    """Reference mass evolution in plain floats (source-site coefficients)."""
    cur = {tuple(start): 1.0}
    for _ in range(n):
        nxt = {}
        for x, m in cur.items():
            for y, w in env.law_at(x).mean_offspring.items():
                z = add(x, y)
                nxt[z] = nxt.get(z, 0.0) + m * w
        cur = nxt
    return cur


def brute_adjoint(env, target, n):
    """Reference adjoint evolution (coefficients attach to the site itself)."""
    offs = env.spec.step_set.offsets
    cur = {tuple(target): 1.0}
    for _ in range(n):
        sources = {tuple(a - b for a, b in zip(z, y)) for z in cur for y in offs}
        nxt = {}
        for x in sources:
            s = sum(
                w * cur.get(add(x, y), 0.0)
                for y, w in env.law_at(x).mean_offspring.items()
            )
            if s > 0.0:
                nxt[x] = s
        cur = nxt
    return cur


def layer_masses(fld):
    return {x: math.exp(v) for x, v in fld.items()}


def last(env, start, n, **kw):
    return solve(env, start, n, **kw)[-1]


class TestAgainstEnumeration:
    def test_forward_matches_path_sums(self):
        env = random_env(np.random.default_rng(11))
        fld = last(env, (0,), 7)
        got = layer_masses(fld)
        want = brute_forward(env, (0,), 7)
        assert set(got) == {x for x, m in want.items() if m > 0.0}
        for x, m in got.items():
            assert m == pytest.approx(want[x], rel=1e-10)

    def test_adjoint_matches_path_sums(self):
        env = random_env(np.random.default_rng(12))
        fld = last(env, (0,), 6, adjoint=True)
        got = layer_masses(fld)
        want = brute_adjoint(env, (0,), 6)
        for x, m in got.items():
            assert m == pytest.approx(want[x], rel=1e-10)

    def test_forward_adjoint_duality(self):
        # expected count at z started from x = adjoint field from z read at x
        env = random_env(np.random.default_rng(13))
        n = 6
        fwd = last(env, (0,), n)
        for z in [(-4,), (-2,), (0,), (2,), (4,), (6,)]:
            adj = last(env, z, n, adjoint=True)
            assert math.exp(fwd.get(z)) == pytest.approx(
                math.exp(adj.get((0,))), rel=1e-10)

    def test_sparse_three_dimensional(self):
        law = law_of(
            ({(1, 0, 0): 1}, 0.2), ({(-1, 0, 0): 1}, 0.2),
            ({(0, 1, 0): 1}, 0.15), ({(0, -1, 0): 1}, 0.15),
            ({(0, 0, 1): 2}, 0.15), ({(0, 0, -1): 1}, 0.15))
        env = homogeneous_env(law, dimension=3)
        fld = last(env, (0, 0, 0), 4)
        assert not fld.dense
        want = brute_forward(env, (0, 0, 0), 4)
        got = layer_masses(fld)
        assert set(got) == set(want)
        for x, m in got.items():
            assert m == pytest.approx(want[x], rel=1e-10)


class TestHomogeneousClosedForms:
    def test_binomial_masses(self):
        env = homogeneous_env(doubling_law())
        n = 40
        fld = last(env, (0,), n)
        for x in range(-n, n + 1):
            v = fld.get((x,))
            if (n + x) % 2 == 1:
                assert v == float("-inf")
            else:
                assert v == pytest.approx(
                    math.log(math.comb(n, (n + x) // 2)), abs=1e-11)

    def test_total_growth_is_log_mean_total(self):
        env = homogeneous_env(mean2_law())
        n = 120
        fld = last(env, (0,), n)
        assert fld.log_total() / n == pytest.approx(math.log(2.0), abs=1e-12)

    def test_offset_start(self):
        env = homogeneous_env(doubling_law())
        fld = last(env, (5,), 8)
        assert math.exp(fld.get((5,))) == pytest.approx(math.comb(8, 4))


class TestLayerInvariants:
    def test_supermultiplicative_in_log_space(self):
        env = random_env(np.random.default_rng(21))
        s, t = 5, 4
        big = last(env, (0,), s + t)
        mid = last(env, (0,), s)
        for y, ly in mid.items():
            tail = last(env, y, t)
            for z, lz in tail.items():
                assert big.get(z) >= ly + lz - 1e-9

    def test_support_inside_ball(self):
        env = random_env(np.random.default_rng(22))
        l0 = env.spec.step_set.l0_max
        for fld in iter_layers(env, (3,), 9):
            for x, _ in fld.items():
                assert abs(x[0] - 3) <= l0 * fld.n

    def test_iter_layers_counts_and_indices(self):
        env = random_env(np.random.default_rng(23))
        layers = list(iter_layers(env, (0,), 5))
        assert [f.n for f in layers] == [0, 1, 2, 3, 4, 5]
        assert layers[0].get((0,)) == 0.0
        assert layers[0].support_size() == 1

    def test_workers_bit_identical(self):
        env = random_env(np.random.default_rng(24))
        a = solve(env, (0,), 30, workers=1)
        b = solve(env, (0,), 30, workers=4)
        for la, lb in zip(a, b):
            assert la.lo == lb.lo
            assert np.array_equal(la.values, lb.values)

    def test_two_dimensional_workers_bit_identical(self):
        lazy = law_of(({(1, 0): 1}, 0.3), ({(-1, 0): 1}, 0.3),
                      ({(0, 1): 2}, 0.2), ({(0, -1): 1}, 0.2))
        env = homogeneous_env(lazy, dimension=2)
        a = solve(env, (0, 0), 12, workers=1)
        b = solve(env, (0, 0), 12, workers=3)
        assert np.array_equal(a[-1].values, b[-1].values)

    def test_expected_total_helper(self):
        env = homogeneous_env(doubling_law())
        fld = last(env, (0,), 10)
        assert expected_total(fld) == fld.log_total()


class TestRadiusCap:
    def test_horizon_exceeding_radius_raises(self):
        env = random_env(np.random.default_rng(31))
        l0 = env.spec.step_set.l0_max
        with pytest.raises(SolverError):
            list(iter_layers(env, (0,), 10, max_radius=10 * l0 - 1))

    def test_exact_radius_is_enough(self):
        env = random_env(np.random.default_rng(31))
        l0 = env.spec.step_set.l0_max
        fld = last(env, (0,), 10, max_radius=10 * l0)
        assert fld.n == 10

    def test_stepwise_cap(self):
        env = homogeneous_env(doubling_law())
        fld = LogMassField.delta((0,))
        fld = forward_layer(env, fld, max_radius=1)
        with pytest.raises(SolverError):
            forward_layer(env, fld, max_radius=1)


class TestAndersonIdentity:
    def test_adjoint_layers_satisfy_identity(self):
        env = random_env(np.random.default_rng(41))
        fenv = FactorizedEnv.from_environment(env)
        layers = list(iter_layers(env, (0,), 20, adjoint=True))
        assert check_anderson_equation(fenv, layers) <= 1e-10

    def test_forward_layers_violate_identity(self):
        # two distinct laws: source-site coefficients break the site-local form
        env = iid_env([drift_law(), doubling_law()], [0.5, 0.5], 99)
        fenv = FactorizedEnv.from_environment(env)
        fwd = list(iter_layers(env, (0,), 12))
        adj = list(iter_layers(env, (0,), 12, adjoint=True))
        assert check_anderson_equation(fenv, adj) <= 1e-10
        assert check_anderson_equation(fenv, fwd) > 1e-3

    def test_bad_factorization_raises(self):
        env = homogeneous_env(drift_law())
        fenv = FactorizedEnv(env, lambda x: 1.0,
                             lambda x: {(1,): 0.5, (-1,): 0.5})
        layers = list(iter_layers(env, (0,), 2, adjoint=True))
        with pytest.raises(SolverError):
            check_anderson_equation(fenv, layers)


class TestLayerDumps:
    def test_csv_round_trip(self, tmp_path):
        env = random_env(np.random.default_rng(51))
        fld = last(env, (0,), 9)
        p = tmp_path / "layer.csv"
        write_layer_csv(fld, str(p))
        back = read_layer_csv(str(p))
        assert back == dict(fld.items())

    def test_csv_repr_is_lossless(self, tmp_path):
        env = random_env(np.random.default_rng(52))
        fld = last(env, (0,), 15)
        p = tmp_path / "layer.csv"
        write_layer_csv(fld, str(p))
        for x, v in read_layer_csv(str(p)).items():
            assert v == fld.get(x)

    def test_binary_round_trip_dense(self, tmp_path):
        env = random_env(np.random.default_rng(53))
        fld = last(env, (-2,), 11)
        p = tmp_path / "layer.bin"
        write_layer_binary(fld, str(p))
        back = read_layer_binary(str(p))
        assert back.n == fld.n
        assert back.dimension == fld.dimension
        assert back.lo == fld.lo
        assert np.array_equal(back.values, fld.values)

    def test_binary_round_trip_sparse(self, tmp_path):
        law = law_of(
            ({(1, 0, 0): 1}, 0.4), ({(-1, 0, 0): 1}, 0.2),
            ({(0, 1, 0): 1}, 0.1), ({(0, -1, 0): 1}, 0.1),
            ({(0, 0, 1): 1}, 0.1), ({(0, 0, -1): 1}, 0.1))
        env = homogeneous_env(law, dimension=3)
        fld = last(env, (0, 0, 0), 3)
        p = tmp_path / "layer.bin"
        write_layer_binary(fld, str(p))
        back = read_layer_binary(str(p))
        assert back.n == fld.n
        for x, v in fld.items():
            assert back.get(x) == v
        # odd-parity holes come back as log(0)
        assert back.get((0, 0, 0)) == float("-inf")

    def test_binary_header(self, tmp_path):
        fld = last(homogeneous_env(doubling_law()), (0,), 2)
        p = tmp_path / "layer.bin"
        write_layer_binary(fld, str(p))
        raw = p.read_bytes()
        assert raw[:4] == b"BRWL"
        assert int.from_bytes(raw[4:6], "little") == 1  # version
        assert int.from_bytes(raw[6:8], "little") == 1  # dimension
        assert int.from_bytes(raw[8:16], "little", signed=True) == 2  # layer
        assert len(raw) == 4 + 12 + 8 + 8 + 5 * 8

    def test_bad_magic_rejected(self, tmp_path):
        p = tmp_path / "junk.bin"
        p.write_bytes(b"NOPE" + bytes(60))
        with pytest.raises(SolverError):
            read_layer_binary(str(p))


class TestFieldBasics:
    def test_delta_layers(self):
        dense = LogMassField.delta((2,))
        sparse = LogMassField.delta((1, 2, 3), sparse=True)
        assert dense.get((2,)) == 0.0
        assert dense.get((3,)) == float("-inf")
        assert sparse.get((1, 2, 3)) == 0.0
        assert sparse.support_size() == dense.support_size() == 1

    def test_negative_horizon_rejected(self):
        env = homogeneous_env(doubling_law())
        with pytest.raises(SolverError):
            solve(env, (0,), -1)

    def test_items_sorted(self):
        env = random_env(np.random.default_rng(61))
        fld = last(env, (0,), 8)
        sites = [x for x, _ in fld.items()]
        assert sites == sorted(sites)
