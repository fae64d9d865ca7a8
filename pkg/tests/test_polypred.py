import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recdir.errors import ValidationError
from recdir.polypred import (
    BILINEAR_BASIS,
    LINEAR2_BASIS,
    Poly,
    PolyPredictor,
    bilinear,
    canonical_order,
    compose,
    depressed_cubic_roots,
    evaluate,
    invert_linear_two_step,
    iterate,
    jacobian,
    linear,
    linear_two_step_map,
)

coef = st.floats(-1.5, 1.5, allow_nan=False)


def fd_jacobian(comp, b, step=1e-5):
    b = np.asarray(b, dtype=float)
    cols = []
    for i in range(b.size):
        e = np.zeros_like(b)
        e[i] = step
        cols.append((comp.alpha(b + e) - comp.alpha(b - e)) / (2 * step))
    return np.column_stack(cols)


# evaluation ------------------------------------------------------------------

def test_eval_linear():
    assert evaluate(linear([1, 1]), [2, 3]) == 5


def test_eval_empty_predictor_is_zero():
    assert evaluate(PolyPredictor(2, ()), [2, 3]) == 0


def test_eval_single_monomial():
    assert evaluate(PolyPredictor(2, (((1, 1), 1.0),)), [2, 3]) == 6


def test_eval_window_length_mismatch():
    with pytest.raises(ValidationError):
        evaluate(linear([1, 1]), [1, 2, 3])


def test_zero_coefficients_pruned_and_equal_forms_compare_equal():
    a = PolyPredictor(2, (((0, 1), 2.0), ((1, 0), 1.0), ((1, 1), 0.0)))
    b = PolyPredictor(2, {(1, 0): 1.0, (0, 1): 2.0})
    assert a == b
    assert a.monomials == ((1, 0), (0, 1))


def test_canonical_order_graded_lex():
    ms = [(0, 2), (1, 1), (2, 0), (0, 1), (1, 0), (2, 1)]
    assert canonical_order(ms) == ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (2, 1))


def test_negative_exponent_rejected():
    with pytest.raises(ValidationError):
        PolyPredictor(2, (((-1, 0), 1.0),))


# JSON ------------------------------------------------------------------------

def test_json_round_trip():
    pred = PolyPredictor(3, {(2, 1, 0): 0.5, (0, 0, 1): -1.25})
    again = PolyPredictor.from_json(pred.to_json())
    assert again == pred
    d = json.loads(pred.to_json())
    assert d["p"] == 3
    assert {"exps": {"0": 2, "1": 1}, "coef": 0.5} in d["terms"]


def test_json_parse_error_reports_position():
    with pytest.raises(ValidationError, match="line 1 column"):
        PolyPredictor.from_json('{"p": 2, "terms": [}')


def test_json_lag_out_of_range():
    with pytest.raises(ValidationError, match="lag index"):
        PolyPredictor.from_json('{"p": 2, "terms": [{"exps": {"2": 1}, "coef": 1}]}')


# Poly arithmetic -------------------------------------------------------------

def test_poly_arithmetic_matches_numeric():
    x, y = Poly.var(2, 0), Poly.var(2, 1)
    p = (x + y) ** 3 * x + Poly.const(2, 2)
    assert p([1.5, -0.5]) == pytest.approx((1.0) ** 3 * 1.5 + 2)
    assert p.diff(0)([1.5, -0.5]) == pytest.approx(3 * 1.0 ** 2 * 1.5 + 1.0)


# composition -----------------------------------------------------------------

def test_linear_two_step_param_map_exact():
    comp = compose(linear([0.3, -0.7]), 2, basis=LINEAR2_BASIS)
    assert comp.describe() == [("y_t", "b2 + b1^2"), ("y_{t-1}", "b1*b2")]
    assert comp.monomials == LINEAR2_BASIS


@pytest.mark.parametrize("b", [(0, 0), (1, 1), (0.5, 0.2), (-1.2, 0.7)])
def test_linear_two_step_map_matches_engine(b):
    comp = compose(linear(b), 2, basis=LINEAR2_BASIS)
    assert tuple(comp.alpha()) == pytest.approx(linear_two_step_map(b), abs=1e-15)


@pytest.mark.parametrize("b,expected", [((0, 0), (0, 0)), ((1, 1), (2, 1)), ((0.5, 0.2), (0.45, 0.10))])
def test_linear_two_step_map_values(b, expected):
    assert linear_two_step_map(b) == pytest.approx(expected, abs=1e-15)


def test_h1_is_identity():
    pred = bilinear([0.4, -0.2, 0.9])
    comp = compose(pred, 1)
    assert comp.composed == pred
    np.testing.assert_array_equal(comp.jacobian_at(), np.eye(3))


def test_bilinear_param_map_expansion():
    # ground truth from expanding the two-step bilinear recursion by hand
    comp = compose(bilinear([1, 1, 1]), 2, basis=BILINEAR_BASIS)
    assert dict(comp.describe()) == {
        "y_t": "b2 + b1^2",
        "y_{t-1}": "b1*b2",
        "y_t^2": "b1*b3",
        "y_t*y_{t-1}": "b1*b3 + b2*b3",
        "y_t^2*y_{t-1}": "b3^2",
    }


def test_bilinear_reduces_to_linear_when_b3_zero():
    comp = compose(bilinear([0.7, -0.3, 0.0]), 2, basis=BILINEAR_BASIS)
    alpha = dict(zip(comp.monomials, comp.alpha()))
    assert alpha[(1, 0)] == pytest.approx(0.7 ** 2 - 0.3)
    assert alpha[(0, 1)] == pytest.approx(0.7 * -0.3)
    assert alpha[(2, 0)] == alpha[(1, 1)] == alpha[(2, 1)] == 0


def test_printed_bilinear_alpha_disagrees_with_expansion():
    """The alternative closed form ``(b1 + b2^2, 2 b1 b2)`` fails the b3 = 0 limit."""
    b = (0.7, -0.3, 0.0)
    comp = compose(bilinear(b), 2, basis=BILINEAR_BASIS)
    engine = comp.alpha()[:2]
    alt = np.array([b[0] + b[1] ** 2, 2 * b[0] * b[1]])
    np.testing.assert_allclose(engine, linear_two_step_map(b[:2]), rtol=0, atol=1e-15)
    assert np.max(np.abs(engine - alt)) > 0.1
    # the higher-order coefficients do agree with b1*b3, b3*(b1+b2), b3^2
    b = np.array([0.4, -0.8, 1.1])
    a = dict(zip(comp.monomials, comp.alpha(b)))
    assert a[(2, 0)] == pytest.approx(b[0] * b[2])
    assert a[(1, 1)] == pytest.approx(b[2] * (b[0] + b[1]))
    assert a[(2, 1)] == pytest.approx(b[2] ** 2)


def test_compose_deterministic():
    pred = PolyPredictor(3, {(1, 0, 0): 0.2, (0, 1, 1): -0.5, (0, 0, 1): 0.1})
    a, b = compose(pred, 3), compose(pred, 3)
    assert a.composed.terms == b.composed.terms
    assert a.param_map == b.param_map


def test_compose_rejects_bad_h():
    with pytest.raises(ValidationError):
        compose(linear([1, 1]), 0)


@settings(max_examples=60, deadline=None)
@given(st.lists(coef, min_size=3, max_size=3), st.lists(st.floats(-2, 2), min_size=2, max_size=2),
       st.sampled_from([1, 2, 3]))
def test_composed_equals_iteration_bilinear(b, w, h):
    pred = bilinear(b)
    comp = compose(pred, h, basis=BILINEAR_BASIS)
    want = iterate(pred, w, h)
    got = evaluate(comp.composed, w)
    assert got == pytest.approx(want, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("p", [1, 3, 4])
def test_composed_equals_iteration_other_lag_orders(p):
    rng = np.random.default_rng(p)
    for _ in range(20):
        pred = linear(rng.uniform(-1.5, 1.5, p))
        w = rng.uniform(-2, 2, p)
        for h in (1, 2, 3):
            assert evaluate(compose(pred, h).composed, w) == pytest.approx(iterate(pred, w, h), rel=1e-10, abs=1e-12)


# Jacobian --------------------------------------------------------------------

def test_linear_jacobian_closed_form():
    comp = compose(linear([1, 1]), 2, basis=LINEAR2_BASIS)
    np.testing.assert_array_equal(jacobian(comp, [1, 1]), [[2, 1], [1, 1]])
    np.testing.assert_array_equal(jacobian(comp, [0, 0]), [[0, 1], [0, 0]])
    b1, b2 = 0.3, -0.9
    np.testing.assert_allclose(jacobian(comp, [b1, b2]), [[2 * b1, 1], [b2, b1]])


def test_jacobian_dimension_mismatch():
    comp = compose(linear([1, 1]), 2, basis=LINEAR2_BASIS)
    with pytest.raises(ValidationError):
        jacobian(comp, [1, 1, 1])


@pytest.mark.parametrize("h", [1, 2, 3])
def test_jacobian_matches_finite_differences(h):
    rng = np.random.default_rng(h)
    comp = compose(bilinear([1, 1, 1]), h, basis=BILINEAR_BASIS)
    for _ in range(20):
        b = rng.uniform(-1.5, 1.5, 3)
        assert np.max(np.abs(comp.jacobian_at(b) - fd_jacobian(comp, b))) < 1e-6


def test_param_map_arrays_round_trip():
    comp = compose(bilinear([1, 1, 1]), 3, basis=BILINEAR_BASIS)
    coef_, exps, nterms = comp.param_map_arrays()
    b = np.array([0.3, -0.4, 0.8])
    dense = [sum(coef_[j, k] * np.prod(b ** exps[j, k]) for k in range(nterms[j])) for j in range(len(nterms))]
    np.testing.assert_allclose(dense, comp.alpha(b), rtol=1e-13)


# inversion -------------------------------------------------------------------

def test_invert_zero():
    assert (0.0, 0.0) in invert_linear_two_step((0, 0))


def test_invert_factorable_cubic():
    sols = invert_linear_two_step((2, 1))
    b1s = sorted(s[0] for s in sols)
    golden = [(-1 - math.sqrt(5)) / 2, (-1 + math.sqrt(5)) / 2, 1.0]
    np.testing.assert_allclose(b1s, golden, atol=1e-12)
    for b1, b2 in sols:
        assert b2 == pytest.approx(2 - b1 * b1)


@settings(max_examples=300, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_invert_round_trip(a1, a2):
    sols = invert_linear_two_step((a1, a2))
    assert sols
    for b in sols:
        np.testing.assert_allclose(linear_two_step_map(b), (a1, a2), atol=1e-9)


@pytest.mark.parametrize("p,q", [(0, 0), (0, -8), (-3, 2), (-3, -2), (1e-9, 1e-9), (-1e-8, 0), (5, 1)])
def test_cubic_branches(p, q):
    for t in depressed_cubic_roots(p, q):
        assert abs(t ** 3 + p * t + q) < 1e-9
