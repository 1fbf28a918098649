import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxid.exponent_core import (
    NEG_INF,
    AtomicExponentMeasure,
    CylinderEvent,
    MovingMaximaModel,
    Profile,
    cylinder_joint_prob,
    cylinder_prob,
    exceedance_mass,
    finite_dim_measure,
    lebowitz_check,
    mixing_gap,
    project_marginal,
    random_event,
    random_model,
    sample_values,
    tau_exact,
    tau_from_definition,
)
from maxid.modelio import dumps_model, loads_model


def brute_cylinder_prob(model, indices, levels, pad=20):
    """Independent route: product over every shift in a wide window of
    P[no Poisson point of that shift violates the event]."""
    lo, hi = min(indices) - pad, max(indices) + pad
    log_p = 0.0
    for prof in model.profiles:
        for s in range(lo - max(prof.support), hi - min(prof.support) + 1):
            if any(prof.values.get(t - s, -math.inf) > y for t, y in zip(indices, levels)):
                log_p -= prof.mass
    for v, m in model.diagonal:
        if any(v > y for y in levels):
            log_p -= m
    return math.exp(log_p)


def test_exceedance_examples():
    assert exceedance_mass(AtomicExponentMeasure(1, (((3.0,), 0.5),)), [2.0]) == 0.5
    assert exceedance_mass(AtomicExponentMeasure(2), [0.0, 5.0]) == 0.0
    Q = AtomicExponentMeasure(2, (((1.0, 2.0), 0.3), ((0.0, 0.0), 0.7)))
    assert exceedance_mass(Q, [1.0, 1.0]) == pytest.approx(0.3, abs=1e-15)
    assert cylinder_prob(Q, [1.0, 1.0]) == pytest.approx(math.exp(-0.3), rel=1e-15)


def test_cylinder_prob_examples():
    assert cylinder_prob(AtomicExponentMeasure(3), [0, 0, 0]) == 1.0
    Q = AtomicExponentMeasure(1, (((2.0,), 0.4),))
    assert cylinder_prob(Q, [1.5]) == pytest.approx(math.exp(-0.4))
    assert cylinder_prob(Q, [2.0]) == 1.0


def test_dimension_mismatch_rejected():
    Q = AtomicExponentMeasure(2, (((1.0, 2.0), 0.3),))
    with pytest.raises(ValueError):
        exceedance_mass(Q, [1.0])
    with pytest.raises(ValueError):
        AtomicExponentMeasure(2, (((1.0,), 0.3),))


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_bad_masses_rejected(bad):
    with pytest.raises(ValueError):
        AtomicExponentMeasure(1, (((1.0,), bad),))


def test_plus_infinity_coordinate_rejected():
    with pytest.raises(ValueError):
        AtomicExponentMeasure(1, (((math.inf,), 1.0),))


def test_canonicalization_merges_duplicates():
    Q = AtomicExponentMeasure(1, (((1.0,), 0.25), ((1.0,), 0.5), ((NEG_INF,), 0.1)))
    assert Q.atoms == (((NEG_INF,), 0.1), ((1.0,), 0.75))


def test_projection_examples():
    Q = AtomicExponentMeasure(2, (((1.0, 2.0), 0.3), ((1.0, 0.0), 0.7)))
    assert project_marginal(Q, [0, 1]) == Q
    proj = project_marginal(Q, [0])
    assert proj.dim == 1 and len(proj.atoms) == 1
    assert proj.atoms[0][0] == (1.0,) and proj.atoms[0][1] == pytest.approx(1.0)


def test_projection_drops_neg_inf_atoms():
    Q = AtomicExponentMeasure(2, (((NEG_INF, 2.0), 0.3), ((1.0, NEG_INF), 0.7)))
    assert project_marginal(Q, [0]).atoms == (((1.0,), 0.7),)


@pytest.mark.parametrize("coords", [[], [2], [-1]])
def test_projection_bad_subsets(coords):
    Q = AtomicExponentMeasure(2, (((1.0, 2.0), 0.3),))
    with pytest.raises(ValueError):
        project_marginal(Q, coords)


@pytest.mark.parametrize("y1", [-1.0, 0.5, 1.0, 2.5])
def test_projection_matches_joint_limit(y1):
    Q = AtomicExponentMeasure(
        2, (((1.0, 2.0), 0.3), ((0.0, 5.0), 0.2), ((NEG_INF, 4.0), 0.4), ((2.0, NEG_INF), 0.1))
    )
    # enumerated oracle: atoms whose first coordinate exceeds y1
    expected = sum(m for (p0, _), m in Q.atoms if p0 > y1)
    assert exceedance_mass(project_marginal(Q, [0]), [y1]) == pytest.approx(expected)
    assert cylinder_prob(project_marginal(Q, [0]), [y1]) == pytest.approx(
        cylinder_prob(Q, [y1, 1e300])
    )


def test_finite_dim_single_lag_profile():
    model = MovingMaximaModel((Profile(0.4, {0: 1.5}),))
    Q = finite_dim_measure(model, (0, 3))
    assert Q == AtomicExponentMeasure(2, (((1.5, NEG_INF), 0.4), ((NEG_INF, 1.5), 0.4)))


def test_finite_dim_diagonal():
    model = MovingMaximaModel(diagonal=((0.7, 0.2),))
    assert finite_dim_measure(model, (0, 5)) == AtomicExponentMeasure(2, (((0.7, 0.7), 0.2),))


def test_finite_dim_shift_invariance():
    model = MovingMaximaModel((Profile(0.3, {0: 1.0, 1: 2.0, 4: -1.0}),), ((0.5, 0.1),))
    assert finite_dim_measure(model, (0, 3)) == finite_dim_measure(model, (7, 10))


def test_tau_exact_examples():
    indep = MovingMaximaModel((Profile(0.5, {0: 2.0}), Profile(0.2, {0: 3.0})))
    assert all(tau_exact(indep, 0.0, t) == 0.0 for t in range(1, 6))
    diag = MovingMaximaModel(diagonal=((2.0, 0.3),))
    assert all(tau_exact(diag, 1.0, t) == 0.3 for t in range(0, 6))
    two = MovingMaximaModel((Profile(0.6, {0: 1.0, 1: 1.0}),))
    assert tau_exact(two, 0.0, 1) == 0.6
    assert tau_exact(two, 0.0, 2) == 0.0


def test_tau_from_definition_examples():
    indep = MovingMaximaModel((Profile(0.5, {0: 2.0}),))
    assert tau_from_definition(indep, 0.0, 3) == pytest.approx(0.0, abs=1e-15)
    diag = MovingMaximaModel(diagonal=((2.0, 0.3),))
    assert tau_from_definition(diag, 1.0, 4) == pytest.approx(0.3, abs=1e-15)


def test_cylinder_prob_against_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(200):
        model = random_model(rng)
        ev = random_event(rng, max_len=4)
        got = cylinder_joint_prob(model, [(ev, 0)])
        merged = {}
        for t, y in ev.entries:
            merged[t] = min(y, merged.get(t, math.inf))
        ref = brute_cylinder_prob(model, list(merged), list(merged.values()))
        assert got == pytest.approx(ref, rel=1e-12)


def test_tau_matches_definition_randomized():
    rng = np.random.default_rng(3)
    for _ in range(200):
        model = random_model(rng)
        for a in (-1.0, 0.0, 1.0, 2.0):
            for t in range(0, 10):
                assert abs(tau_exact(model, a, t) - tau_from_definition(model, a, t)) <= 1e-10


def test_tau_sample_estimate_agrees():
    # sampler is an independent route to the law; check one model at 4 se
    model = MovingMaximaModel((Profile(0.7, {0: 1.0, 2: 2.0}),), ((1.5, 0.2),))
    rng = np.random.default_rng(5)
    x = sample_values(model, (0, 2), 200_000, rng)
    a = 0.5
    p0, pt = (x[:, 0] <= a).mean(), (x[:, 1] <= a).mean()
    pj = ((x[:, 0] <= a) & (x[:, 1] <= a)).mean()
    est = math.log(pj) - math.log(p0) - math.log(pt)
    assert est == pytest.approx(tau_exact(model, a, 2), abs=0.03)


models = st.builds(
    lambda seed: random_model(np.random.default_rng(seed)), st.integers(0, 2**32 - 1)
)


@settings(max_examples=60, deadline=None)
@given(models, st.floats(-2, 3), st.integers(-8, 8))
def test_tau_symmetry_and_bounds(model, a, t):
    tau = tau_exact(model, a, t)
    assert tau == pytest.approx(tau_exact(model, a, -t), abs=1e-15)
    bound = tau_exact(model, a, 0)  # Q_0((a, inf))
    assert -1e-15 <= tau <= bound + 1e-12


@settings(max_examples=60, deadline=None)
@given(models, st.floats(-2, 3), st.floats(0, 2), st.integers(0, 8))
def test_tau_nonincreasing_in_level(model, a, da, t):
    assert tau_exact(model, a + da, t) <= tau_exact(model, a, t) + 1e-15


@settings(max_examples=40, deadline=None)
@given(models, st.integers(-8, 8))
def test_projection_commutes_with_finite_dim(model, t):
    Q = finite_dim_measure(model, (0, t))
    assert project_marginal(Q, [0]).isclose(finite_dim_measure(model, (0,)))
    assert project_marginal(Q, [1]).isclose(finite_dim_measure(model, (t,)))


def test_cylinder_joint_single_event():
    model = MovingMaximaModel((Profile(0.5, {0: 1.0, 1: 0.0}),), ((2.0, 0.1),))
    ev = CylinderEvent.of([0, 2], [0.5, 1.5])
    Q = finite_dim_measure(model, [0, 2])
    assert cylinder_joint_prob(model, [(ev, 0)]) == cylinder_prob(Q, [0.5, 1.5])


def test_cylinder_joint_far_apart_factorizes():
    model = MovingMaximaModel((Profile(0.5, {0: 1.0, 1: 0.0, 3: 2.0}),))
    A = CylinderEvent.of([0, 1], [0.5, 1.5])
    B = CylinderEvent.of([0, 2], [0.2, 0.3])
    joint = cylinder_joint_prob(model, [(A, 0), (B, 50)])
    pa = cylinder_joint_prob(model, [(A, 0)])
    pb = cylinder_joint_prob(model, [(B, 0)])
    assert joint == pytest.approx(pa * pb, rel=1e-14)


def test_cylinder_joint_duplicate_merge():
    model = MovingMaximaModel((Profile(0.5, {0: 1.0}),), ((2.0, 0.1),))
    A = CylinderEvent.of([0], [0.5])
    assert cylinder_joint_prob(model, [(A, 0), (A, 0)]) == cylinder_joint_prob(model, [(A, 0)])
    # duplicate indices keep the smaller level
    B = CylinderEvent.of([0], [3.0])
    assert cylinder_joint_prob(model, [(A, 0), (B, 0)]) == cylinder_joint_prob(model, [(A, 0)])


def test_lebowitz_far_separation_equality():
    model = MovingMaximaModel((Profile(0.5, {0: 1.0, 2: 0.5}), Profile(0.3, {0: 2.0, 1: 0.0})))
    A = CylinderEvent.of([0, 1], [0.2, 0.8])
    B = CylinderEvent.of([-1, 2], [0.4, 0.3])
    res = lebowitz_check(model, A, B, 2 * model.width + 10)
    assert res.lower_ok and res.upper_ok
    assert abs(res.lower_slack) <= 1e-12
    assert abs(res.upper_slack) <= 1e-12  # theta = 0 far away


def test_lebowitz_a_equals_b_at_zero():
    model = MovingMaximaModel((Profile(0.8, {0: 1.0}),))
    A = CylinderEvent.of([0], [0.5])
    res = lebowitz_check(model, A, A, 0)
    assert res.upper_ok and abs(res.upper_slack) <= 1e-12
    assert res.p_joint == pytest.approx(res.p_a)


def test_lebowitz_fuzz():
    rng = np.random.default_rng(17)
    for _ in range(100):
        model = random_model(rng)
        A, B = random_event(rng), random_event(rng)
        for t in range(-6, 7):
            res = lebowitz_check(model, A, B, t)
            assert res.lower_ok and res.upper_ok


def test_higher_order_mixing_factorizes():
    model = MovingMaximaModel((Profile(0.4, {0: 1.0, 1: 2.0, 3: 0.0}), Profile(0.9, {0: 0.5})))
    events = [CylinderEvent.of([0, 1], [0.5, 1.0]), CylinderEvent.of([0], [0.2]),
              CylinderEvent.of([2, 5], [1.5, 0.7])]
    gap_far = mixing_gap(model, events, [20, 20])
    assert abs(gap_far) <= 1e-15
    gap_near = mixing_gap(model, events, [1, 1])
    assert gap_near > 0  # positive association


def test_higher_order_mixing_with_diagonal_does_not_vanish():
    model = MovingMaximaModel((Profile(0.4, {0: 1.0}),), ((2.0, 0.5),))
    events = [CylinderEvent.of([0], [1.0])] * 3
    assert mixing_gap(model, events, [100, 100]) > 0.01


def test_model_roundtrip():
    rng = np.random.default_rng(2)
    for _ in range(20):
        model = random_model(rng)
        assert loads_model(dumps_model(model)) == model


def test_model_yaml_form():
    text = """
profiles:
  - mass: 0.5
    support: [[0, 1.0], [1, 2.0]]
diagonal:
  - [1.5, 0.3]
"""
    model = loads_model(text)
    assert model.profiles[0].values == {0: 1.0, 1: 2.0}
    assert model.diagonal == ((1.5, 0.3),)


@pytest.mark.parametrize("text", [
    "profiles: [{mass: -1, support: [[0, 1.0]]}]",
    "profiles: [{mass: 1, support: []}]",
    "diagonal: [[1.0]]",
    "bogus: 1",
])
def test_model_schema_errors(text):
    with pytest.raises(Exception):
        loads_model(text)
