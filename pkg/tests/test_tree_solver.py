"""Backward induction on the binomial tree."""

import numpy as np
import pytest

from bsvie import (
    GeneratorSpec,
    InnerIterationError,
    NumericBlowupError,
    TreeSolveConfig,
    build_tree,
    entropic_reference,
    make_grid,
    solve_bsde_tree,
)
from bsvie.tree_solver import as_driver


def _tree(steps, horizon=1.0):
    return build_tree(make_grid(horizon, steps))


def test_zero_driver_reproduces_martingale():
    """With g = 0 and terminal W_T the solution is Y = W, Z = 1 exactly."""
    tree = _tree(40)
    gen = GeneratorSpec("linear")  # all coefficients zero
    sol = solve_bsde_tree(tree, gen, tree.terminal_nodes)
    for k in range(41):
        np.testing.assert_allclose(sol.y_levels[k][:, 0], tree.nodes(k), atol=1e-13)
    for k in range(40):
        np.testing.assert_allclose(sol.z_levels[k][:, 0], 1.0, atol=1e-13)


def test_entropic_root_against_quadrature():
    """Two independent routes to E[exp(-W_1)]: Gauss quadrature of the normal
    density and the exact on-tree average. They agree to the tree's O(h)
    consistency gap."""
    x = np.linspace(-10.0, 10.0, 20001)
    quad = np.trapezoid(np.exp(-x) * np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi), x)
    assert np.log(quad) == pytest.approx(0.5, abs=1e-12)
    tree = _tree(100)
    ref = entropic_reference(tree, tree.terminal_nodes, 1.0)
    assert ref[0][0] == pytest.approx(np.log(quad), abs=2e-3)


def test_quadratic_driver_exact_on_affine_solution():
    """Driver z^2/2 with terminal -W_T admits Y = -W + c(t), constant Z = -1;
    the implicit scheme reproduces it to rounding at every refinement."""
    for steps in (25, 100, 200):
        tree = _tree(steps)
        sol = solve_bsde_tree(tree, GeneratorSpec("entropic_diag", gamma=1.0),
                              -tree.terminal_nodes)
        assert sol.root_value()[0] == pytest.approx(0.5, abs=1e-12)
        zmax = max(float(np.max(np.abs(z + 1.0))) for z in sol.z_levels)
        assert zmax <= 1e-12


def test_reference_gap_shrinks_linearly():
    """The closed-form on-tree value N log cosh(sqrt(h)) carries an O(h)
    consistency gap against the continuum 1/2; the solver sits on the
    continuum value, so the gap between routes decays at first order."""
    gaps = {}
    for steps in (25, 50, 100):
        tree = _tree(steps)
        sol = solve_bsde_tree(tree, GeneratorSpec("entropic_diag", gamma=1.0),
                              -tree.terminal_nodes)
        ref = entropic_reference(tree, tree.terminal_nodes, 1.0)[0][0]
        closed = steps * np.log(np.cosh(np.sqrt(1.0 / steps)))
        assert ref == pytest.approx(closed, abs=1e-12)
        gaps[steps] = abs(sol.root_value()[0] - ref)
    assert gaps[25] / gaps[50] == pytest.approx(2.0, rel=0.1)
    assert gaps[50] / gaps[100] == pytest.approx(2.0, rel=0.1)


def test_diagonal_driver_components_decouple():
    """A diagonal driver with stacked terminals equals two scalar solves."""
    tree = _tree(30)
    gen2 = GeneratorSpec("entropic_diag", dim=2, gamma=1.5)
    term = np.stack([np.sin(tree.terminal_nodes), np.tanh(tree.terminal_nodes)], axis=1)
    both = solve_bsde_tree(tree, gen2, term)
    gen1 = GeneratorSpec("entropic_diag", dim=1, gamma=1.5)
    first = solve_bsde_tree(tree, gen1, term[:, 0])
    second = solve_bsde_tree(tree, gen1, term[:, 1])
    for k in range(31):
        np.testing.assert_array_equal(both.y_levels[k][:, 0], first.y_levels[k][:, 0])
        np.testing.assert_array_equal(both.y_levels[k][:, 1], second.y_levels[k][:, 0])


def test_implicit_equals_explicit_for_z_only_driver():
    """Without y in the driver, the inner fixed point closes in one update,
    so both schemes take the same arithmetic path bit for bit."""
    tree = _tree(25)
    gen = GeneratorSpec("entropic_diag", gamma=2.0)
    term = np.sin(tree.terminal_nodes)
    a = solve_bsde_tree(tree, gen, term, TreeSolveConfig(scheme="implicit"))
    b = solve_bsde_tree(tree, gen, term, TreeSolveConfig(scheme="explicit"))
    for k in range(26):
        np.testing.assert_array_equal(a.y_levels[k], b.y_levels[k])
    assert int(a.inner_iterations.max()) == 2


def test_implicit_iteration_converges_for_y_driver():
    tree = _tree(20)
    gen = GeneratorSpec("linear", coef_y=-1.0)
    sol = solve_bsde_tree(tree, gen, np.cos(tree.terminal_nodes))
    assert int(sol.inner_iterations.max()) >= 2
    assert float(sol.inner_residuals.max()) <= 1e-12
    # value sanity: Y_0 close to exp(-T) E[cos W_T] = exp(-1) exp(-1/2) cos 0
    assert sol.root_value()[0] == pytest.approx(np.exp(-1.5), abs=5e-3)


def test_inner_iteration_error_when_step_map_expands():
    """h * Lipschitz(y) > 1 makes the per-step fixed point non-contractive."""
    tree = _tree(10)
    gen = GeneratorSpec("linear", coef_y=-60.0)
    with pytest.raises(InnerIterationError) as exc:
        solve_bsde_tree(tree, gen, np.sin(tree.terminal_nodes))
    assert exc.value.level == 9
    assert exc.value.iterations == 50


def test_blowup_raises():
    tree = _tree(32)
    gen = GeneratorSpec("superquad", p=3.0)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(NumericBlowupError):
            solve_bsde_tree(tree, gen, 8.0 * np.tanh(tree.terminal_nodes))


def test_nonfinite_terminal_rejected():
    tree = _tree(5)
    term = tree.terminal_nodes.copy()
    term[2] = np.nan
    with pytest.raises(NumericBlowupError):
        solve_bsde_tree(tree, GeneratorSpec("linear"), term)
    with pytest.raises(ValueError):
        solve_bsde_tree(tree, GeneratorSpec("linear"), term[:-1])
    with pytest.raises(ValueError):
        solve_bsde_tree(tree, GeneratorSpec("linear", dim=2), tree.terminal_nodes)


def test_z_truncation_is_applied():
    tree = _tree(12)
    cfg = TreeSolveConfig(z_max=0.25)
    sol = solve_bsde_tree(tree, GeneratorSpec("linear"), tree.terminal_nodes, cfg)
    zmax = max(float(np.max(np.abs(z))) for z in sol.z_levels)
    assert zmax <= 0.25


def test_entropic_reference_single_step():
    tree = _tree(1, horizon=0.04)
    xi = tree.terminal_nodes  # (-0.2, 0.2)
    gamma = 2.5
    ref = entropic_reference(tree, xi, gamma)
    expect = np.log(0.5 * (np.exp(-gamma * xi[0]) + np.exp(-gamma * xi[1]))) / gamma
    assert ref[0][0] == pytest.approx(expect, abs=1e-15)
    with pytest.raises(ValueError):
        entropic_reference(tree, xi, 0.0)


def test_level_stats_weighted_mean():
    tree = _tree(16)
    sol = solve_bsde_tree(tree, GeneratorSpec("linear"), tree.terminal_nodes**2)
    st = sol.level_stats("y")
    assert st["t"][0] == 0.0
    assert st["mean"][0] == pytest.approx(sol.root_value()[0])
    # terminal level mean is the unconditional expectation of W_T^2 = T
    assert st["mean"][-1] == pytest.approx(1.0, abs=1e-12)


def test_as_driver_freezes_outer_time():
    calls = []

    def fn(t, s, y, z):
        calls.append((t, s))
        return np.zeros_like(y)

    gen = GeneratorSpec("user_table", fn=fn, t_dependent=True)
    drv = as_driver(gen, outer_time=0.25)
    drv(3, 0.75, np.zeros((2, 1)), np.zeros((2, 1)))
    assert calls[-1] == (0.25, 0.75)
    diag = as_driver(gen)
    diag(3, 0.75, np.zeros((2, 1)), np.zeros((2, 1)))
    assert calls[-1] == (0.75, 0.75)
