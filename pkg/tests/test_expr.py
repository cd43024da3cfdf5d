"""Expression DSL: parsing, derivatives, fields, Schouten brackets."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sprayform import expr as ex
from sprayform.errors import (
    ArityError,
    EvalDomainError,
    ExprSyntaxError,
    UnknownIdentifierError,
)
from sprayform.expr import (
    BivectorField,
    FormField,
    VectorField,
    parse,
    partial,
    schouten,
    subst,
    to_source,
    wedge_vector_bivector,
)

XS = ["x1", "x2", "x3"]


# ---------------------------------------------------------------------------
# parsing


def test_parse_product_plus_one():
    e = parse("x1*x2 + 1", XS)
    assert isinstance(e, ex.Add)
    assert e.eval({"x1": 2.0, "x2": 3.0}) == 7.0


def test_parse_power_precedence():
    e = parse("sin(x3)^2", XS)
    assert isinstance(e, ex.Pow)
    assert isinstance(e.a, ex.Call)
    assert e.eval({"x3": 0.7}) == pytest.approx(math.sin(0.7) ** 2, abs=1e-15)


def test_parse_unclosed_paren_is_syntax_error():
    with pytest.raises(ExprSyntaxError) as err:
        parse("x1*(x2", XS)
    assert err.value.column is not None


def test_unary_minus_binds_tighter_than_power():
    assert parse("-x1^2", XS).eval({"x1": 3.0}) == 9.0


def test_unknown_identifier_and_arity():
    with pytest.raises(UnknownIdentifierError):
        parse("x9 + 1", XS)
    with pytest.raises(UnknownIdentifierError):
        parse("tan(x1)", XS)
    with pytest.raises(ArityError):
        parse("sin + 1", XS)


def test_chained_power_rejected():
    with pytest.raises(ExprSyntaxError):
        parse("x1^2^3", XS)


def test_negative_integer_exponent():
    e = parse("x1^-2", XS)
    assert e.eval({"x1": 2.0}) == 0.25


@pytest.mark.parametrize("src", [
    "x1*x2 + 1", "sin(x3)^2", "-x1^2", "x1/(x2 - 3)*exp(x3)",
    "sqrt(x1 + 2) - log(x2 + 5)", "1.5e-3*x1 - -x2",
])
def test_printer_round_trip(src):
    e = parse(src, XS)
    assert parse(to_source(e), XS) == e


def test_structural_equality_implies_equal_evaluation():
    a = parse("x1*x2 + sin(x3)", XS)
    b = parse("x1 * x2 + sin( x3 )", XS)
    assert a == b
    env = {"x1": 0.3, "x2": -1.2, "x3": 2.0}
    assert a.eval(env) == b.eval(env)


# ---------------------------------------------------------------------------
# evaluation domain errors


def test_division_by_zero_raises():
    with pytest.raises(EvalDomainError):
        parse("1/x1", XS).eval({"x1": 0.0})


def test_log_domain_raises():
    with pytest.raises(EvalDomainError):
        parse("log(x1)", XS).eval({"x1": -1.0})


def test_compiled_domain_errors():
    fn = ex.compile_exprs([parse("sqrt(x1)", XS)], XS)
    with pytest.raises(EvalDomainError):
        fn(np.array([[0.5, 0, 0], [-2.0, 0, 0]]))


# ---------------------------------------------------------------------------
# derivatives


def test_partial_square():
    d = partial(parse("x1*x1", XS), "x1")
    for v in (0.0, 1.7, -2.2):
        assert d.eval({"x1": v}) == pytest.approx(2 * v, abs=1e-15)


def test_partial_of_other_variable_is_zero():
    assert partial(parse("x1", XS), "x2").is_zero


def test_partial_exp_fd_cross_check():
    # frozen: d/dx exp(2x) at 0 is 2; central difference at step 1e-5
    e = parse("exp(2*x1)", XS)
    d = partial(e, "x1")
    h = 1e-5
    fd = (e.eval({"x1": h}) - e.eval({"x1": -h})) / (2 * h)
    assert abs(d.eval({"x1": 0.0}) - 2.0) < 1e-15
    assert abs(d.eval({"x1": 0.0}) - fd) < 1e-9


_exprs = st.sampled_from([
    "x1*x2 + x3", "sin(x1)*cos(x2)", "exp(x1/4)*x3", "x1^3 - x2*x3",
    "sqrt(x1 + 3)", "x1/(2 + x2*x2)", "log(x3 + 4) + x1*x1",
])
_points = st.lists(st.floats(-0.9, 0.9), min_size=3, max_size=3)


@settings(max_examples=60, deadline=None)
@given(_exprs, _points, st.sampled_from(XS), st.sampled_from(XS))
def test_mixed_partials_commute(src, pt, u, v):
    e = parse(src, XS)
    env = dict(zip(XS, pt))
    duv = partial(partial(e, u), v).eval(env)
    dvu = partial(partial(e, v), u).eval(env)
    assert duv == pytest.approx(dvu, abs=1e-12, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(_exprs, _points, st.sampled_from(XS))
def test_partial_agrees_with_central_differences(src, pt, u):
    e = parse(src, XS)
    env = dict(zip(XS, pt))
    x0 = env[u]
    h = 1e-4 * (1.0 + abs(x0))

    def at(s):
        env2 = dict(env)
        env2[u] = x0 + s
        return e.eval(env2)

    fd = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h)
    exact = partial(e, u).eval(env)
    assert fd == pytest.approx(exact, rel=1e-7, abs=1e-7)


def test_substitution():
    e = parse("x1*x2 + sin(x1)", XS)
    s = subst(e, {"x1": parse("x3 + 1", XS)})
    env = {"x2": 2.0, "x3": 0.5}
    assert s.eval(env) == pytest.approx(1.5 * 2.0 + math.sin(1.5), abs=1e-14)


# ---------------------------------------------------------------------------
# exterior derivative


def test_d_of_x1_dx2():
    w = FormField(XS, 1, {(1,): parse("x1", XS)})
    dw = w.d()
    assert dw.component((0, 1)).eval({"x1": 0.4, "x2": 0, "x3": 0}) == 1.0


def test_dd_is_zero():
    w = FormField(XS, 1, {(0,): parse("sin(x2)*x3", XS),
                          (2,): parse("exp(x1)", XS)})
    ddw = w.d().d()
    rng = np.random.default_rng(4)
    for _ in range(10):
        assert ddw.max_abs_at(rng.uniform(-1, 1, 3)) < 1e-14


def test_d_sin_coefficient():
    w = FormField(XS, 1, {(1,): parse("sin(x1)", XS)})
    dw = w.d()
    val = dw.component((0, 1)).eval({"x1": 0.0, "x2": 0.0, "x3": 0.0})
    assert val == pytest.approx(1.0, abs=1e-15)


# ---------------------------------------------------------------------------
# Schouten brackets


def _so3():
    return BivectorField(3, {(0, 1): parse("x3", XS),
                             (0, 2): parse("-x2", XS),
                             (1, 2): parse("x1", XS)}, XS)


def test_schouten_constant_bivector_vanishes():
    pi = BivectorField(3, {(0, 1): ex.ONE, (1, 2): ex.const(2.0)}, XS)
    br = schouten(pi, pi)
    assert br.max_abs_at(np.array([0.5, -0.3, 0.8])) == 0.0


def test_schouten_so3_vanishes_brute_force():
    """Independent oracle: the raw component formula with numeric partials."""
    pi = _so3()
    br = schouten(pi, pi)
    rng = np.random.default_rng(11)

    def entry(x, i, j):
        P = pi.at(x)
        return P[i, j]

    def brute(x, i, k, l):
        # 2 sum_j (pi^{ij} d_j pi^{kl} + pi^{kj} d_j pi^{li} + pi^{lj} d_j pi^{ik})
        h = 1e-6
        total = 0.0
        for j in range(3):
            dx = np.zeros(3)
            dx[j] = h
            for (a, b, c) in ((i, k, l), (k, l, i), (l, i, k)):
                d = (entry(x + dx, b, c) - entry(x - dx, b, c)) / (2 * h)
                total += entry(x, a, j) * d
        return 2.0 * total

    for _ in range(20):
        x = rng.uniform(-1, 1, 3)
        assert br.max_abs_at(x) < 1e-12
        for (i, k, l) in [(0, 1, 2)]:
            assert abs(brute(x, i, k, l)) < 1e-9


def test_schouten_bivector_vector_hand_value():
    # [x1 d1^d2, d1] = -L_{d1}(x1 d1^d2) = -(d1^d2): component (0,1) = -1
    xs = ["x1", "x2"]
    pi = BivectorField(2, {(0, 1): parse("x1", xs)}, xs)
    R = VectorField(xs, [ex.ONE, ex.ZERO])
    br = schouten(pi, R)
    assert br.at(np.array([1.0, 1.0])) == pytest.approx([-1.0])


def test_jacobi_compatibility_contact_example():
    """[pi,pi] = 2 R^pi holds verbatim for the contact-form structure on R^3."""
    pi = BivectorField(3, {(0, 1): ex.const(-1.0), (1, 2): parse("x2", XS)}, XS)
    R = VectorField(XS, [ex.ZERO, ex.ZERO, ex.ONE])
    br = schouten(pi, pi)
    rw = wedge_vector_bivector(R, pi)
    rng = np.random.default_rng(3)
    for _ in range(10):
        x = rng.uniform(-1, 1, 3)
        assert np.max(np.abs(br.at(x) - 2 * rw.at(x))) < 1e-14
        assert np.max(np.abs(schouten(pi, R).at(x))) < 1e-14


def test_jacobi_bracket_jacobiator_vanishes_under_compatibility():
    """The bracket {u,v} = pi(du,dv) + <R,du>v - u<R,dv> satisfies Jacobi."""
    pi = BivectorField(3, {(0, 1): ex.const(-1.0), (1, 2): parse("x2", XS)}, XS)
    R = VectorField(XS, [ex.ZERO, ex.ZERO, ex.ONE])

    def bracket(u, v):
        out = ex.ZERO
        for i in range(3):
            for j in range(3):
                out = ex.add(out, ex.mul(pi.entry(i, j),
                                         ex.mul(partial(u, XS[i]),
                                                partial(v, XS[j]))))
        return ex.add(out, ex.sub(ex.mul(R.apply_to(u), v),
                                  ex.mul(u, R.apply_to(v))))

    u = parse("x1*x1 + sin(x2)", XS)
    v = parse("x2*x3", XS)
    w = parse("exp(x1) + x3*x3", XS)
    jac = ex.add(bracket(u, bracket(v, w)),
                 ex.add(bracket(v, bracket(w, u)),
                        bracket(w, bracket(u, v))))
    rng = np.random.default_rng(8)
    for _ in range(10):
        env = dict(zip(XS, rng.uniform(-0.8, 0.8, 3)))
        assert abs(jac.eval(env)) < 1e-12


def test_schouten_dimension_mismatch():
    pi2 = BivectorField(2, {(0, 1): ex.ONE}, ["x1", "x2"])
    pi3 = _so3()
    from sprayform.errors import DimensionError
    with pytest.raises(DimensionError):
        schouten(pi3, pi2)


# ---------------------------------------------------------------------------
# compiled evaluation


def test_compiled_matches_tree_eval():
    exprs = [parse(s, XS) for s in
             ("x1*x2 + sin(x3)", "exp(x1) - x2^3", "x3/(x1 + 2)")]
    fn = ex.compile_exprs(exprs, XS)
    rng = np.random.default_rng(0)
    Z = rng.uniform(-1, 1, (40, 3))
    out = fn(Z)
    for b in range(40):
        env = dict(zip(XS, Z[b]))
        for j, e in enumerate(exprs):
            assert out[b, j] == pytest.approx(e.eval(env), rel=1e-14, abs=1e-14)
