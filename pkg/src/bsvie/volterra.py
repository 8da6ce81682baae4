"""Volterra backward equations via a first-time-indexed family of plain
backward equations and an outer Picard iteration.

For each outer grid time t_i the inner problem on [t_i, T] carries terminal
value psi(t_i) and driver s -> g(t_i, s, y(s), z), where y(.) is the frozen
diagonal field of the previous outer iterate (the driver never sees the inner
solve's own Y). The Volterra solution is the diagonal Y(t_i) = eta(t_i, t_i)
together with the triangular field Z(t_i, s_j), j >= i. Outer sweeps repeat
until the weighted sup-distance between consecutive diagonals drops below
eps_outer; non-convergence is a reported verdict, not an exception.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import OuterIndexError
from .grids import BinomialTree, PathEnsemble
from .mc_solver import BasisSpec, McSolveConfig, regress
from .problems import Problem
from .tree_solver import TreeSolveConfig, backward_sweep

__all__ = [
    "PicardConfig",
    "PicardReport",
    "FamilySolution",
    "BsvieSolution",
    "weighted_norm",
    "zero_diagonal",
    "solve_inner_family",
    "solve_bsvie",
    "check_bsde_reduction",
]


@dataclass(frozen=True)
class PicardConfig:
    """Outer-iteration controls.

    eps_outer=None picks the backend default (1e-6 tree, 1e-3 mc). k_w is the
    exponential time weight of the convergence norm; 0 is the plain sup norm.
    Divergence is declared after `divergence_window` consecutive increases of
    the update size.
    """

    max_outer: int = 30
    eps_outer: float | None = None
    k_w: float = 0.0
    divergence_window: int = 5

    def __post_init__(self):
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if self.eps_outer is not None and self.eps_outer <= 0:
            raise ValueError("eps_outer must be positive when set")
        if self.divergence_window < 2:
            raise ValueError("divergence_window must be >= 2")

    def resolved_eps(self, backend: str) -> float:
        if self.eps_outer is not None:
            return self.eps_outer
        return 1e-6 if backend == "tree" else 1e-3


@dataclass
class PicardReport:
    verdict: str  # converged | max_iterations | diverged
    iterations: int
    deltas: list
    eps_outer: float
    k_w: float

    @property
    def converged(self) -> bool:
        return self.verdict == "converged"

    @property
    def ratios(self) -> list:
        return [
            self.deltas[i + 1] / self.deltas[i] if self.deltas[i] > 0 else 0.0
            for i in range(len(self.deltas) - 1)
        ]


def weighted_norm(fields: Sequence[np.ndarray], times: Sequence[float], k_w: float) -> float:
    """max over outer times of exp(k_w t / 2) * sup-norm of the field there."""
    if len(fields) != len(times):
        raise ValueError("one field per time required")
    best = 0.0
    for f, t in zip(fields, times):
        m = float(np.max(np.abs(f))) if np.asarray(f).size else 0.0
        best = max(best, float(np.exp(0.5 * k_w * t)) * m)
    return best


def zero_diagonal(backend: str, *, tree: BinomialTree | None = None,
                  ensemble: PathEnsemble | None = None, dim: int = 1):
    """The all-zero diagonal field used as the Picard seed."""
    if backend == "tree":
        N = tree.grid.steps
        return [np.zeros((k + 1, dim)) for k in range(N + 1)]
    M, N = ensemble.n_paths, ensemble.grid.steps
    return np.zeros((M, N + 1, dim))


@dataclass
class FamilySolution:
    """One outer sweep: the family of inner solutions over all outer indices.

    tree backend: eta[i][j - i] is the field of eta(t_i, .) at level j
    (shape (j + 1, dim)), zeta[i][j - i] the triangular martingale field, and
    diagonal[i] = eta[i][0] the Volterra diagonal at t_i.
    mc backend: diagonal is (M, N + 1, dim); zeta_coef[i] has shape
    (N - i, basis, dim) and represents Z(t_i, s_j) as an adapted function of
    W_{s_j}; eta is not stored per path (memory contract), only its
    coefficient tables eta_coef[i].
    """

    backend: str
    times: np.ndarray
    dim: int
    diagonal: list | np.ndarray
    eta: list | None = None
    zeta: list | None = None
    zeta_coef: list | None = None
    eta_coef: list | None = None
    basis: BasisSpec | None = None
    grid_h: float = 0.0
    z_max: float | None = None

    def diagonal_field(self, i: int) -> np.ndarray:
        if self.backend == "tree":
            return self.diagonal[i]
        return self.diagonal[:, i, :]

    def evaluate_z(self, i: int, j: int, w_values: np.ndarray) -> np.ndarray:
        """mc backend: adapted evaluation of Z(t_i, s_j) at Brownian states."""
        if self.backend != "mc":
            raise ValueError("evaluate_z is an mc-backend accessor")
        if not i <= j < len(self.times) - 1:
            raise ValueError(f"need i <= j < {len(self.times) - 1}")
        F = self.basis.features(np.atleast_1d(w_values), float(self.times[j]), self.grid_h)
        raw = F @ self.zeta_coef[i][j - i]
        if self.z_max is not None:
            raw = np.clip(raw, -self.z_max, self.z_max)
        return raw


def solve_inner_family(
    problem: Problem,
    frozen_diagonal,
    backend: str = "tree",
    *,
    tree: BinomialTree | None = None,
    ensemble: PathEnsemble | None = None,
    tree_config: TreeSolveConfig | None = None,
    mc_config: McSolveConfig | None = None,
    basis: BasisSpec | None = None,
) -> FamilySolution:
    """Solve the whole inner family once against a frozen diagonal field.

    The frozen field enters the driver's y slot; the inner solves are
    independent across outer indices (they share nothing but inputs), so a
    sweep is trivially parallel. Backend errors are re-raised annotated with
    the failing outer index.
    """
    if backend == "tree":
        if tree is None:
            raise ValueError("tree backend requires a tree")
        return _family_sweep_tree(problem, frozen_diagonal, tree, tree_config or TreeSolveConfig())
    if backend == "mc":
        if ensemble is None:
            raise ValueError("mc backend requires an ensemble")
        return _family_sweep_mc(
            problem, frozen_diagonal, ensemble, mc_config or McSolveConfig(), basis or BasisSpec()
        )
    raise ValueError(f"unknown backend {backend!r}")


def _family_sweep_tree(problem, frozen, tree, cfg):
    gen = problem.generator
    ft = problem.free_term
    N = tree.grid.steps
    h = tree.grid.h
    times = tree.grid.times
    base = ft.base_values(tree.terminal_nodes)  # (N+1, dim)
    eta: list = [None] * (N + 1)
    zeta: list = [None] * (N + 1)
    diag: list = [None] * (N + 1)
    for i in range(N + 1):
        t_i = times[i]
        term_i = base * ft.profile_weight(t_i, problem.horizon)

        def driver(k, s, y, z, t_i=t_i):
            return gen.evaluate(t_i, s, frozen[k], z)

        try:
            y_lv, z_lv, _, _ = backward_sweep(tree, driver, term_i, stop_level=i, config=cfg)
        except Exception as exc:  # annotate and re-raise
            raise OuterIndexError(i, exc) from exc
        eta[i] = y_lv
        zeta[i] = z_lv
        diag[i] = y_lv[0]
    return FamilySolution(
        backend="tree", times=times, dim=problem.dim, diagonal=diag, eta=eta, zeta=zeta
    )


def _family_sweep_mc(problem, frozen, ensemble, cfg, basis):
    gen = problem.generator
    ft = problem.free_term
    grid = ensemble.grid
    N, h = grid.steps, grid.h
    M = ensemble.n_paths
    times = grid.times
    dim = problem.dim
    base = ft.base_values(ensemble.terminal)  # (M, dim)
    feats = [basis.features(ensemble.paths[:, k], times[k], h) for k in range(N)]
    diag = np.empty((M, N + 1, dim))
    zeta_coef: list = [None] * (N + 1)
    eta_coef: list = [None] * (N + 1)
    for i in range(N + 1):
        t_i = times[i]
        term_i = base * ft.profile_weight(t_i, problem.horizon)
        if i == N:
            diag[:, N, :] = term_i
            zeta_coef[N] = np.empty((0, basis.size, dim))
            eta_coef[N] = np.empty((0, basis.size, dim))
            continue
        zc_i = np.empty((N - i, basis.size, dim))
        yc_i = np.empty((N - i, basis.size, dim))
        y_next = term_i
        try:
            for k in range(N - 1, i - 1, -1):
                F = feats[k]
                dw = ensemble.increments[:, k]
                zc, _ = regress(F, y_next * (dw / h)[:, None], basis.ridge)
                zk = np.clip(F @ zc, -cfg.z_max, cfg.z_max)
                yc, _ = regress(F, y_next, basis.ridge)
                proj = F @ yc
                y_next = proj + h * gen.evaluate(t_i, times[k], frozen[:, k, :], zk)
                zc_i[k - i] = zc
                yc_i[k - i] = yc
        except Exception as exc:
            raise OuterIndexError(i, exc) from exc
        diag[:, i, :] = y_next
        zeta_coef[i] = zc_i
        eta_coef[i] = yc_i
    return FamilySolution(
        backend="mc", times=times, dim=dim, diagonal=diag,
        zeta_coef=zeta_coef, eta_coef=eta_coef, basis=basis, grid_h=h, z_max=cfg.z_max,
    )


@dataclass
class BsvieSolution:
    """Converged (or last-iterate) Volterra solution plus the outer report."""

    backend: str
    times: np.ndarray
    dim: int
    family: FamilySolution
    report: PicardReport

    @property
    def diagonal(self):
        return self.family.diagonal

    def diagonal_field(self, i: int) -> np.ndarray:
        return self.family.diagonal_field(i)

    def diagonal_summary(self) -> np.ndarray:
        """Expected diagonal per time and component, shape (steps + 1, dim).

        tree: exact binomial-weighted mean; mc: path mean.
        """
        if self.backend == "mc":
            return self.family.diagonal.mean(axis=0)
        out = np.empty((len(self.times), self.dim))
        for k, f in enumerate(self.family.diagonal):
            w = stats.binom.pmf(np.arange(k + 1), k, 0.5)
            out[k] = w @ f
        return out


def _delta_fields(backend, new, old, n_times):
    if backend == "tree":
        return [new[i] - old[i] for i in range(n_times)]
    return [new[:, i, :] - old[:, i, :] for i in range(n_times)]


def solve_bsvie(
    problem: Problem,
    backend: str = "tree",
    *,
    tree: BinomialTree | None = None,
    ensemble: PathEnsemble | None = None,
    tree_config: TreeSolveConfig | None = None,
    mc_config: McSolveConfig | None = None,
    basis: BasisSpec | None = None,
    picard: PicardConfig | None = None,
):
    """Outer Picard iteration from the zero diagonal.

    Returns (BsvieSolution, PicardReport). The report's verdict is
    "converged", "max_iterations", or "diverged" (update size grew over
    `divergence_window` consecutive sweeps); the solution always carries the
    last completed sweep.
    """
    pc = picard or PicardConfig()
    eps = pc.resolved_eps(backend)
    if backend == "tree" and tree is None:
        raise ValueError("tree backend requires a tree")
    if backend == "mc" and ensemble is None:
        raise ValueError("mc backend requires an ensemble")
    n_times = (tree.grid.steps if backend == "tree" else ensemble.grid.steps) + 1
    times = (tree if backend == "tree" else ensemble).grid.times
    frozen = zero_diagonal(backend, tree=tree, ensemble=ensemble, dim=problem.dim)

    deltas: list[float] = []
    verdict = "max_iterations"
    fam = None
    iterations = 0
    for m in range(1, pc.max_outer + 1):
        fam = solve_inner_family(
            problem, frozen, backend,
            tree=tree, ensemble=ensemble,
            tree_config=tree_config, mc_config=mc_config, basis=basis,
        )
        iterations = m
        delta = weighted_norm(_delta_fields(backend, fam.diagonal, frozen, n_times), times, pc.k_w)
        deltas.append(delta)
        frozen = fam.diagonal
        if delta <= eps:
            verdict = "converged"
            break
        w = pc.divergence_window
        if len(deltas) > w and all(
            deltas[-j] > deltas[-j - 1] for j in range(1, w + 1)
        ):
            verdict = "diverged"
            break
    report = PicardReport(verdict=verdict, iterations=iterations, deltas=deltas,
                          eps_outer=eps, k_w=pc.k_w)
    sol = BsvieSolution(backend=backend, times=times, dim=problem.dim, family=fam, report=report)
    return sol, report


def check_bsde_reduction(
    problem: Problem,
    backend: str = "tree",
    *,
    tree: BinomialTree | None = None,
    ensemble: PathEnsemble | None = None,
    basis: BasisSpec | None = None,
    eps_inner: float = 1e-14,
    eps_outer: float = 1e-13,
    max_outer: int = 80,
) -> dict:
    """For first-time-independent data, the Volterra diagonal must reproduce
    the plain backward solve.

    Requires a driver without first-time dependence and a free term without a
    time profile. Runs both routes at tightened tolerances and returns the
    triangular comparison: max over grid times of the sup distance between the
    Volterra diagonal and the plain solution field, plus the per-time profile.
    """
    gen = problem.generator
    ft = problem.free_term
    if gen.t_dependent:
        raise ValueError("reduction check requires a first-time-independent driver")
    if ft.time_profile != "none":
        raise ValueError("reduction check requires a profile-free free term")

    if backend == "tree":
        from .tree_solver import solve_bsde_tree

        cfg = TreeSolveConfig(scheme="implicit", eps_inner=eps_inner, max_inner=200)
        term = ft.base_values(tree.terminal_nodes)
        bsde = solve_bsde_tree(tree, gen, term, cfg)
        sol, rep = solve_bsvie(
            problem, "tree", tree=tree, tree_config=cfg,
            picard=PicardConfig(max_outer=max_outer, eps_outer=eps_outer),
        )
        per_time = np.array([
            float(np.max(np.abs(bsde.y_levels[i] - sol.diagonal_field(i))))
            for i in range(tree.grid.steps + 1)
        ])
    else:
        from .mc_solver import solve_bsde_mc

        cfg = McSolveConfig(scheme="implicit", eps_inner=eps_inner, max_inner=200)
        term = ft.base_values(ensemble.terminal)
        bsde = solve_bsde_mc(ensemble, gen, term, basis, cfg)
        sol, rep = solve_bsvie(
            problem, "mc", ensemble=ensemble, mc_config=cfg, basis=basis,
            picard=PicardConfig(max_outer=max_outer, eps_outer=eps_outer),
        )
        per_time = np.array([
            float(np.max(np.abs(bsde.y[:, i, :] - sol.diagonal_field(i))))
            for i in range(ensemble.grid.steps + 1)
        ])
    return {
        "discrepancy": float(per_time.max()),
        "per_time": per_time,
        "picard": rep,
    }
