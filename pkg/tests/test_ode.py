import math

import numpy as np
import pytest

from ivreach.interval import Box, DimensionMismatch, Interval
from ivreach.ode import (
    DuplicateDeclaration,
    EnclosureFailure,
    IncompleteModel,
    Interval as _Iv,  # noqa: F401  (re-exported for convenience checks)
    ModelSyntaxError,
    UnboundVariable,
    UndeclaredVariable,
    apriori_enclosure,
    deriv_interval,
    expr_eval_interval,
    expr_eval_point,
    parse_model,
    reach_odex,
    reach_odey,
    simulate_ode,
    unparse_model,
)

ACC_SOURCE = """
# two-car longitudinal dynamics with first-order acceleration lag
state x_l v_l g_l x_e v_e g_e
input a_l a_e

deriv x_l = v_l
deriv v_l = g_l
deriv g_l = -2*g_l + 2*a_l - 0.001*sqr(v_l)
deriv x_e = v_e
deriv v_e = g_e
deriv g_e = -2*g_e + 2*a_e - 0.001*sqr(v_e)

output d_rel = x_l - x_e
output v_rel = v_l - v_e
output v_ego = v_e
"""


# ---------------------------------------------------------------------------
# parsing

def test_parse_minimal_model():
    m = parse_model("state x\ninput u\nderiv x = u - x")
    assert m.state_vars == ("x",)
    assert m.input_vars == ("u",)
    assert m.n_states == 1 and m.n_inputs == 1


def test_parse_undeclared_variable():
    with pytest.raises(UndeclaredVariable):
        parse_model("state x\nderiv x = y")


def test_parse_acc_fixture():
    m = parse_model(ACC_SOURCE)
    assert m.n_states == 6 and m.n_inputs == 2
    assert set(m.outputs) == {"d_rel", "v_rel", "v_ego"}
    # spot-check the lag derivative at a point
    env = {"g_l": 1.0, "a_l": -2.0, "v_l": 30.0}
    i = m.state_vars.index("g_l")
    assert expr_eval_point(m.derivs[i], env) == pytest.approx(-2 * 1 + 2 * (-2) - 0.001 * 900)


def test_parse_duplicate_declaration():
    with pytest.raises(DuplicateDeclaration):
        parse_model("state x x\nderiv x = x")
    with pytest.raises(DuplicateDeclaration):
        parse_model("state x\nderiv x = x\nderiv x = x")
    with pytest.raises(DuplicateDeclaration):
        parse_model("state x\nderiv x = x\noutput x = x")


def test_parse_missing_deriv():
    with pytest.raises(IncompleteModel):
        parse_model("state x y\nderiv x = y")


def test_parse_syntax_error_has_position():
    with pytest.raises(ModelSyntaxError) as err:
        parse_model("state x\nderiv x = 1 + * 2")
    assert err.value.line == 2


def test_parse_unknown_function():
    with pytest.raises(ModelSyntaxError):
        parse_model("state x\nderiv x = sinh(x)")


def test_parse_comments_and_blank_lines():
    m = parse_model("# header\nstate x  # trailing\n\nderiv x = -x\n")
    assert m.state_vars == ("x",)


def test_roundtrip_unparse_parse():
    for src in [
        "state x\ninput u\nderiv x = u - x",
        ACC_SOURCE,
        "state a b\nderiv a = sin(a) * cos(b) / (1 + sqr(b))\nderiv b = -a - -b\noutput s = exp(a) - 2",
    ]:
        m = parse_model(src)
        again = parse_model(unparse_model(m))
        assert again == m


# ---------------------------------------------------------------------------
# interval evaluation

def test_dependency_widening_x_minus_x():
    m = parse_model("state x\nderiv x = x - x")
    r = expr_eval_interval(m.derivs[0], {"x": Interval(0, 1)})
    assert r.lo == pytest.approx(-1, abs=1e-14) and r.hi == pytest.approx(1, abs=1e-14)


def test_linear_expression_interval():
    m = parse_model("state x\nderiv x = 2*x + 1")
    r = expr_eval_interval(m.derivs[0], {"x": Interval(0, 1)})
    assert r.lo == pytest.approx(1, abs=1e-14) and r.hi == pytest.approx(3, abs=1e-14)


def test_acc_lag_derivative_interval_endpoint_analysis():
    m = parse_model(ACC_SOURCE)
    i = m.state_vars.index("g_l")
    env = {
        "g_l": Interval(0, 0),
        "a_l": Interval(-2, -2),
        "v_l": Interval(30, 30.2),
    }
    r = expr_eval_interval(m.derivs[i], env)
    # monotone decreasing in v**2: bounds come from the v endpoints
    expect_lo = -4 - 0.001 * 30.2**2
    expect_hi = -4 - 0.001 * 30.0**2
    assert r.lo == pytest.approx(expect_lo, rel=1e-12)
    assert r.hi == pytest.approx(expect_hi, rel=1e-12)
    # grid oracle confirmation
    vals = [-2 * 0 + 2 * -2 - 0.001 * v * v for v in np.linspace(30, 30.2, 2000)]
    assert r.lo <= min(vals) and max(vals) <= r.hi


def test_unbound_variable():
    m = parse_model("state x\ninput u\nderiv x = u")
    with pytest.raises(UnboundVariable):
        expr_eval_interval(m.derivs[0], {"x": Interval(0, 1)})


# ---------------------------------------------------------------------------
# a priori enclosure

def test_enclosure_zero_field_is_fixed_point():
    m = parse_model("state x\nderiv x = 0")
    b = apriori_enclosure(m, Box.from_pairs([(1, 2)]), None, h=5.0)
    # fixed point up to the mandatory outward rounding
    assert b.lo[0] == pytest.approx(1, abs=1e-12) and b.hi[0] == pytest.approx(2, abs=1e-12)
    assert b.lo[0] <= 1 and 2 <= b.hi[0]


def test_enclosure_unit_flow():
    m = parse_model("state x\nderiv x = 1")
    b = apriori_enclosure(m, Box.from_pairs([(0, 0)]), None, h=0.1)
    assert b.lo[0] <= 0 and b.hi[0] >= 0.1


def test_enclosure_contains_exponential_decay():
    m = parse_model("state x\nderiv x = -x")
    b = apriori_enclosure(m, Box.from_pairs([(1, 1)]), None, h=0.1)
    for t in np.linspace(0, 0.1, 101):
        assert b.lo[0] <= math.exp(-t) <= b.hi[0]


def test_enclosure_picard_containment_posthoc():
    m = parse_model("state x y\nderiv x = y\nderiv y = -x - 0.5*y")
    X = Box.from_pairs([(0.9, 1.1), (-0.1, 0.1)])
    h = 0.05
    B = apriori_enclosure(m, X, None, h)
    f = deriv_interval(m, B, None)
    span = Interval(0.0, h)
    P = Box.from_intervals([X[i] + span * f[i] for i in range(2)])
    assert P.issubset(B)


# ---------------------------------------------------------------------------
# reach_odex

def test_odex_zero_field():
    m = parse_model("state x\nderiv x = 0")
    segs, x_next = reach_odex(m, None, Box.from_pairs([(1, 2)]), h=1.0, m=4)
    assert len(segs) == 4
    assert x_next.lo[0] == pytest.approx(1, abs=1e-12) and x_next.hi[0] == pytest.approx(2, abs=1e-12)
    for s in segs:
        assert s.states.lo[0] == pytest.approx(1, abs=1e-12)
        assert s.states.hi[0] == pytest.approx(2, abs=1e-12)
    assert segs[0].t_lo == 0.0 and segs[-1].t_hi == 1.0


def test_odex_unit_flow():
    m = parse_model("state x\nderiv x = 1")
    segs, x_next = reach_odex(m, None, Box.from_pairs([(0, 0)]), h=1.0, m=10)
    assert x_next.lo[0] <= 1.0 <= x_next.hi[0]
    assert x_next.width() <= 0.05


def test_odex_exponential_decay():
    m = parse_model("state x\nderiv x = -x")
    segs, x_next = reach_odex(m, None, Box.from_pairs([(1, 1)]), h=1.0, m=100)
    assert x_next.lo[0] <= math.exp(-1) <= x_next.hi[0]
    assert x_next.width() <= 0.1


def test_odex_segments_tile_and_cover_trajectories():
    m = parse_model("state x y\ninput u\nderiv x = y\nderiv y = u - 0.3*y - sin(x)")
    X0 = Box.from_pairs([(0.0, 0.2), (-0.1, 0.1)])
    U = Box.from_pairs([(-0.5, 0.5)])
    h, substeps = 0.5, 10
    segs, x_next = reach_odex(m, U, X0, h=h, m=substeps)
    assert segs[0].t_lo == 0.0 and segs[-1].t_hi == h
    for a, b in zip(segs, segs[1:]):
        assert a.t_hi == b.t_lo
    rng = np.random.default_rng(123)
    for _ in range(100):
        x0 = X0.lo + rng.random(2) * (X0.hi - X0.lo)
        u = U.lo + rng.random(1) * (U.hi - U.lo)
        traj = simulate_ode(m, x0, u, h, steps=substeps * 10)
        times = np.linspace(0, h, substeps * 10 + 1)
        for t, x in zip(times, traj):
            for seg in segs:
                if seg.t_lo <= t <= seg.t_hi:
                    assert seg.states.contains_point(x)
        assert x_next.contains_point(traj[-1])


def test_odex_substep_refinement_does_not_widen():
    m = parse_model("state x\nderiv x = -x + 0.1*sqr(x)")
    X0 = Box.from_pairs([(0.8, 1.0)])
    _, coarse = reach_odex(m, None, X0, h=0.5, m=10)
    _, fine = reach_odex(m, None, X0, h=0.5, m=20)
    assert fine.width() <= coarse.width() + 1e-12


def test_odex_validation_errors():
    m = parse_model("state x\nderiv x = -x")
    with pytest.raises(ValueError):
        reach_odex(m, None, Box.from_pairs([(0, 1)]), h=0.0, m=10)
    with pytest.raises(ValueError):
        reach_odex(m, None, Box.from_pairs([(0, 1)]), h=1.0, m=0)


def test_odex_enclosure_failure_reports_substep():
    # quadratic blowup: x' = 1 + x^2 from ~tan(t); huge step defeats Picard
    m = parse_model("state x\nderiv x = 1 + sqr(x)")
    with pytest.raises(EnclosureFailure) as err:
        reach_odex(m, None, Box.from_pairs([(0, 0.5)]), h=50.0, m=1)
    assert err.value.substep == 0


# ---------------------------------------------------------------------------
# reach_odey

def test_odey_subtraction_hull():
    m = parse_model(ACC_SOURCE)
    X = Box.from_pairs([(94, 96), (30, 30.2), (0, 0), (10, 11), (30, 30.2), (0, 0)])
    out = reach_odey(m, X)
    assert out["d_rel"].lo == pytest.approx(83, abs=1e-12)
    assert out["d_rel"].hi == pytest.approx(86, abs=1e-12)


def test_odey_identity_output():
    m = parse_model("state x\nderiv x = -x\noutput ident = x")
    out = reach_odey(m, Box.from_pairs([(2, 5)]))
    assert out["ident"] == Interval(2, 5)


def test_odey_dependency_excess():
    m = parse_model(ACC_SOURCE)
    X = Box.from_pairs([(94, 96), (30, 30.2), (0, 0), (10, 11), (30, 30.2), (0, 0)])
    out = reach_odey(m, X)
    # equal-point inputs still widen: interval subtraction cannot see the
    # correlation, so the bound is [-0.2, 0.2] rather than a zero width
    assert out["v_rel"].lo == pytest.approx(-0.2, abs=1e-12)
    assert out["v_rel"].hi == pytest.approx(0.2, abs=1e-12)


def test_odey_missing_inputs_raise():
    m = parse_model("state x\ninput u\nderiv x = u\noutput drive = u + x")
    with pytest.raises(UnboundVariable):
        reach_odey(m, Box.from_pairs([(0, 1)]))
    out = reach_odey(m, Box.from_pairs([(0, 1)]), Box.from_pairs([(2, 3)]))
    assert out["drive"].lo == pytest.approx(2, abs=1e-12)
    assert out["drive"].hi == pytest.approx(4, abs=1e-12)


def test_odey_dimension_mismatch():
    m = parse_model(ACC_SOURCE)
    with pytest.raises(DimensionMismatch):
        reach_odey(m, Box.from_pairs([(0, 1)]))
