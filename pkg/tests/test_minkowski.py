import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hkcollapse.minkowski import (
    Boost,
    Event,
    FrameMismatchError,
    IntervalClass,
    Worldline,
    boost,
    classify,
    forward_of_backward_cone,
    in_backward_cone,
    interval_squared,
    is_mutually_spacelike,
)

coord = st.floats(-10, 10, allow_nan=False)
event4 = st.builds(lambda t, x, y, z: Event("e", (t, x, y, z)), coord, coord, coord, coord)


@st.composite
def boosts(draw, vmax=0.99):
    d = np.array([draw(st.floats(-1, 1)) for _ in range(3)])
    n = np.linalg.norm(d)
    if n < 1e-6:
        d, n = np.array([1.0, 0.0, 0.0]), 1.0
    speed = draw(st.floats(0, vmax))
    return Boost(tuple(float(c) for c in d / n * speed))


def E(t, x):
    return Event.at(t, x)


class TestInterval:
    def test_examples(self):
        assert interval_squared(Event("o", (0, 0, 0, 0)), Event("p", (1, 0, 0, 0))) == 1
        assert interval_squared(Event("o", (0, 0, 0, 0)), Event("p", (0, 1, 0, 0))) == -1
        assert interval_squared(Event("o", (0, 0, 0, 0)), Event("p", (1, 1, 0, 0))) == 0

    def test_classify_examples(self):
        assert classify(E(0, 0), E(1, 0)) is IntervalClass.TIMELIKE
        assert classify(E(0, 0), E(0, 1)) is IntervalClass.SPACELIKE
        assert classify(E(0, 0), E(1, 1)) is IntervalClass.LIGHTLIKE

    def test_lightlike_band(self):
        assert classify(E(0, 0), E(1, 1 + 1e-11)) is IntervalClass.LIGHTLIKE
        assert classify(E(0, 0), E(1, 1 + 1e-6)) is IntervalClass.SPACELIKE

    def test_frame_mismatch(self):
        with pytest.raises(FrameMismatchError):
            interval_squared(E(0, 0), Event("b", (0, 1, 0, 0), "other"))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            Event("bad", (math.nan, 0, 0, 0))
        with pytest.raises(ValueError):
            Event("short", (0, 0, 0))

    @given(event4, event4)
    def test_symmetric(self, a, b):
        assert interval_squared(a, b) == interval_squared(b, a)


class TestSpacelike:
    def test_examples(self):
        assert is_mutually_spacelike([E(0, -1), E(0, 1)])
        assert not is_mutually_spacelike([E(0, 0), E(1, 0)])
        assert is_mutually_spacelike([E(0, -1), E(0, 0), E(0, 1)])

    def test_needs_two(self):
        with pytest.raises(ValueError):
            is_mutually_spacelike([E(0, 0)])


class TestCones:
    def test_backward_examples(self):
        assert in_backward_cone(E(-2, 0), E(0, 0))
        assert not in_backward_cone(E(-1, 5), E(0, 0))
        assert not in_backward_cone(E(1, 0), E(0, 0))

    def test_forward_examples(self):
        assert forward_of_backward_cone(E(1, 0), E(0, 0))
        assert not forward_of_backward_cone(E(-2, 0), E(0, 0))
        assert forward_of_backward_cone(E(0, 3), E(0, 0))

    def test_surface_inside_vertex_outside(self):
        assert in_backward_cone(E(-1, 1), E(0, 0))
        assert not in_backward_cone(E(0, 0), E(0, 0))
        assert forward_of_backward_cone(E(0, 0), E(0, 0))

    @given(event4, event4)
    def test_partition(self, e, v):
        assert forward_of_backward_cone(e, v) != in_backward_cone(e, v)

    @given(event4, event4)
    def test_antisymmetric(self, e, v):
        if e.coords != v.coords and in_backward_cone(e, v):
            assert not in_backward_cone(v, e)


class TestBoost:
    def test_example(self):
        b = boost(Event("e", (0, 1, 0, 0)), Boost((0.6, 0, 0)))
        assert b.coords == pytest.approx((-0.75, 1.25, 0, 0), abs=1e-15)
        assert b.frame != "lab"

    def test_identity(self):
        e = Event("e", (1, 0, 0, 0))
        assert boost(e, Boost((0, 0, 0))) == e

    @pytest.mark.parametrize("v", [(1.0, 0, 0), (0.8, 0.7, 0), (2, 0, 0)])
    def test_superluminal(self, v):
        with pytest.raises(ValueError):
            Boost(v)

    def test_parse(self):
        assert Boost.parse("0.6,0,0").velocity == (0.6, 0.0, 0.0)
        assert Boost.parse("0.3").velocity == (0.3, 0.0, 0.0)
        with pytest.raises(ValueError):
            Boost.parse("0.1,0.2")

    @given(event4, boosts())
    def test_matches_matrix_form(self, e, b):
        # oracle: general boost matrix applied to the coordinate 4-vector
        ref = b.matrix() @ np.array(e.coords)
        assert np.allclose(boost(e, b).coords, ref, atol=1e-9)

    def test_matrix_preserves_metric(self):
        b = Boost((0.3, -0.5, 0.4))
        lam = b.matrix()
        eta = np.diag([1, -1, -1, -1])
        assert np.allclose(lam.T @ eta @ lam, eta, atol=1e-12)

    @given(event4, event4, boosts())
    def test_interval_invariant(self, a, c, b):
        s0 = interval_squared(a, c)
        s1 = interval_squared(boost(a, b), boost(c, b))
        assert abs(s0 - s1) <= 1e-9 * max(1.0, abs(s0), b.gamma ** 2 * 400)

    def test_interval_invariant_random_pair(self):
        rng = np.random.default_rng(5)
        a = Event("a", tuple(rng.normal(size=4)))
        c = Event("c", tuple(rng.normal(size=4)))
        b = Boost((0.2, 0.3, -0.1))
        assert abs(interval_squared(a, c) - interval_squared(boost(a, b), boost(c, b))) < 1e-12

    @settings(max_examples=200)
    @given(event4, event4, boosts())
    def test_classification_invariant(self, a, c, b):
        # keep clear of the lightlike band edges, where rounding may legitimately move a pair
        s0 = interval_squared(a, c)
        if 1e-6 < abs(s0) or abs(s0) < 1e-12:
            assert classify(a, c) is classify(boost(a, b), boost(c, b))

    @given(event4, event4, boosts())
    def test_cone_membership_invariant(self, e, v, b):
        s0 = interval_squared(e, v)
        if abs(s0) > 1e-6:
            assert in_backward_cone(e, v) == in_backward_cone(boost(e, b), boost(v, b))


class TestWorldline:
    def test_position_and_boost(self):
        w = Worldline("m", (-1.0, 0, 0), (0.25, 0, 0))
        assert w.at(2.0).coords == (2.0, -0.5, 0.0, 0.0)
        b = Boost((0.6, 0, 0))
        assert w.boosted(b).at(2.0).coords == boost(w.at(2.0), b).coords
        assert w.boosted(b).frame == boost(w.at(0.0), b).frame
