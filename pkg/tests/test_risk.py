"""Dynamic risk evaluation routes and their consistency identities."""

import numpy as np
import pytest

from bsvie import (
    FreeTermSpec,
    GeneratorSpec,
    RiskQuery,
    axiom_suite,
    build_tree,
    entropic_risk,
    entropic_risk_mc,
    entropic_risk_via_bsde,
    equilibrium_risk_bsvie,
    extended_risk_bsde,
    make_grid,
    membership_statistic,
    naive_odd_power_risk,
    odd_power,
    simulate_paths,
)


def _tree(steps=60):
    return build_tree(make_grid(1.0, steps))


SIN = FreeTermSpec(kind="terminal", functional="bounded_sin", scale=1.0)


def test_zero_position_prices_to_zero_on_every_route():
    tree = _tree(20)
    zero = FreeTermSpec(kind="terminal", functional="constant", scale=0.0)
    for curve in (
        entropic_risk(tree, zero, 1.0),
        entropic_risk_via_bsde(tree, zero, 1.0),
        extended_risk_bsde(tree, zero, 1.0, 0.5, 2.0).curve,
        naive_odd_power_risk(tree, zero, 1.0, 0.5),
    ):
        for lvl in curve.levels:
            np.testing.assert_array_equal(np.asarray(lvl), 0.0)


def test_constant_position_prices_to_its_negative():
    tree = _tree(20)
    cash = FreeTermSpec(kind="terminal", functional="constant", scale=0.8)
    assert entropic_risk(tree, cash, 2.0).value_at_root() == pytest.approx(-0.8, abs=1e-14)
    assert entropic_risk_via_bsde(tree, cash, 2.0).value_at_root() == pytest.approx(-0.8, abs=1e-13)


def test_extended_bound_vacuous_for_positive_constant():
    """A surely nonnegative position never overshoots: the bound's left side
    is identically zero and the smallest admissible constant is 0."""
    tree = _tree(20)
    cash = FreeTermSpec(kind="terminal", functional="constant", scale=0.8)
    res = extended_risk_bsde(tree, cash, 1.0, 0.5, 2.0)
    assert res.curve.value_at_root() == pytest.approx(-0.8, abs=1e-13)
    assert res.k_hat == 0.0
    assert res.bound_holds
    for lvl in res.bound_lhs:
        np.testing.assert_array_equal(np.asarray(lvl), 0.0)


def test_extended_bound_finite_for_sin_position():
    res = extended_risk_bsde(_tree(40), SIN, 1.0, 0.5, 2.0)
    assert res.z_convention == "negated"
    assert np.isfinite(res.k_hat)
    assert res.k_hat > 1.0  # the position does overshoot somewhere


def test_alpha_one_collapses_to_entropic():
    """At exponent 1 the extension driver is exactly the quadratic driver at
    risk aversion 2 gamma / kappa; the two solves share every bit."""
    tree = _tree(30)
    ext = extended_risk_bsde(tree, SIN, gamma=1.0, alpha=1.0, kappa=2.0)
    ent = entropic_risk_via_bsde(tree, SIN, gamma=1.0)  # 2 * 1.0 / 2.0
    for a, b in zip(ext.curve.levels, ent.levels):
        np.testing.assert_array_equal(np.asarray(a), np.asarray(b))


def test_gamma_scaling_identity():
    tree = _tree(30)
    big = FreeTermSpec(kind="terminal", functional="bounded_sin", scale=2.0)
    lhs = entropic_risk(tree, big, 1.0)
    rhs = entropic_risk(tree, SIN, 2.0)
    for a, b in zip(lhs.levels, rhs.levels):
        np.testing.assert_allclose(np.asarray(a), 2.0 * np.asarray(b), atol=1e-13)


def test_equilibrium_flow_matches_static_curve_without_profile():
    """A time-constant position flow makes the recursive evaluation collapse
    to the single backward solve, bit for bit."""
    tree = _tree(24)
    flow = FreeTermSpec(kind="process", functional="bounded_sin", scale=1.0)
    gen = GeneratorSpec("entropic_diag", gamma=1.0)
    curve, report = equilibrium_risk_bsvie(tree, flow, gen)
    assert report.converged
    assert report.iterations == 2
    ent = entropic_risk_via_bsde(tree, SIN, 1.0)
    for a, b in zip(curve.levels, ent.levels):
        np.testing.assert_array_equal(np.asarray(a), np.asarray(b))


def test_equilibrium_rejects_bad_inputs():
    tree = _tree(8)
    with pytest.raises(ValueError):
        equilibrium_risk_bsvie(tree, SIN, GeneratorSpec("entropic_diag", gamma=1.0))
    flow = FreeTermSpec(kind="process", functional="bounded_sin")
    with pytest.raises(ValueError):
        equilibrium_risk_bsvie(tree, flow, GeneratorSpec("entropic_diag", gamma=1.0, coef_y=-0.5))


def test_odd_power_round_trip():
    x = np.array([-2.0, -0.3, 0.0, 0.7, 1.9])
    np.testing.assert_allclose(odd_power(odd_power(x, 0.5), 2.0), x, atol=1e-14)
    np.testing.assert_array_equal(odd_power(np.array([-8.0]), 1.0 / 3.0), [-2.0])
    with pytest.raises(ValueError):
        odd_power(x, 0.0)


def test_membership_statistic_constants():
    tree = _tree(12)
    neg = FreeTermSpec(kind="terminal", functional="constant", scale=-0.8)
    levels = membership_statistic(tree, neg, gamma=1.0, alpha=0.5)
    expect = np.exp(0.8**0.5)
    for lvl in levels:
        np.testing.assert_allclose(lvl, expect, atol=1e-12)
    pos = FreeTermSpec(kind="terminal", functional="constant", scale=0.8)
    for lvl in membership_statistic(tree, pos, gamma=1.0, alpha=0.5):
        np.testing.assert_array_equal(lvl, 0.0)
    with pytest.raises(ValueError):
        membership_statistic(tree, neg, gamma=1.0, alpha=1.5)


def test_query_validation():
    with pytest.raises(ValueError):
        RiskQuery(SIN, gamma=0.0)
    with pytest.raises(ValueError):
        RiskQuery(SIN, alpha=1.5)
    with pytest.raises(ValueError):
        RiskQuery(SIN, method="extended_bsde", kappa=1.0)
    with pytest.raises(ValueError):
        RiskQuery(SIN, method="variance")
    with pytest.raises(ValueError):
        RiskQuery(FreeTermSpec(kind="process", functional="bounded_sin"))
    with pytest.raises(ValueError):
        RiskQuery(FreeTermSpec(kind="terminal", functional="bounded_sin", dim=2))
    q = RiskQuery(SIN, gamma=2.0, method="bsde")
    assert q.kappa == 2.0


def test_curve_summary_root_matches():
    tree = _tree(16)
    curve = entropic_risk(tree, SIN, 1.0)
    s = curve.summary()
    assert s["t"][0] == 0.0
    assert s["mean"][0] == pytest.approx(curve.value_at_root())
    assert all(lo <= m <= hi for lo, m, hi in zip(s["min"], s["mean"], s["max"]))


def test_mc_route_tracks_closed_form():
    ens = simulate_paths(make_grid(1.0, 20), 20000, seed=13)
    mc = entropic_risk_mc(ens, SIN, 1.0)
    exact = entropic_risk(_tree(200), SIN, 1.0)
    assert mc.meta["proxy"] is True
    assert mc.value_at_root() == pytest.approx(exact.value_at_root(), abs=0.05)


def test_axiom_suite_passes_with_decisive_witness():
    report = axiom_suite(_tree(60))
    assert report.passed
    assert report.witness_residual > 1e-2
    axioms = {c.axiom for c in report.checks}
    assert axioms == {"translation", "monotonicity", "convexity",
                      "gamma_scaling", "translation_counterexample"}
    lines = report.summary_lines()
    assert len(lines) == len(report.checks)
