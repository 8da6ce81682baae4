"""A-priori estimate checks and stability diagnostics.

exp_moment_bound_check certifies, on a solved tree instance, the exponential
moment bound: for each component and grid time,

    exp(|Y^i(t)|^lam) + E_t[ sum_{s_j >= t} h |Z^i_j|^2 ]
        <= K * E_t[ exp(K (|xi^i| + int_t^T alpha0)^lam) ],

with lam = 2 delta / (1 + delta), searched over the geometric ladder
K in {1, 2, 4, ..., 2^16}. The driver must satisfy the one-sided growth
condition sign(y) g^i <= alpha0(s) + beta |z^i|^(1+delta) along the computed
solution; the check refuses otherwise, since the bound is only claimed under
that structure. The one_sided variant replaces |Y|, |xi| by positive parts
and restricts the Z energy to the region Y^i > 0.

All conditional expectations run twice: a backward midpoint sweep (fast path)
and, on request, an independent full-tree binomial reweighting
(crosscheck_via_weights) that must agree to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sstats

from .errors import NumericBlowupError, InnerIterationError
from .grids import BinomialTree, conditional_expectation_via_weights, make_grid, build_tree
from .problems import FreeTermSpec, GeneratorSpec
from .tree_solver import TreeSolution, TreeSolveConfig, solve_bsde_tree
from .volterra import PicardReport

__all__ = [
    "exp_power",
    "log_exp_power",
    "subadditivity_check",
    "BoundCheck",
    "exp_moment_bound_check",
    "BmoEstimate",
    "bmo_estimate",
    "bmo_estimate_bsvie",
    "ContractionTrace",
    "contraction_trace",
    "SuperquadDemoReport",
    "superquad_demo",
    "K_LADDER",
]

K_LADDER = tuple(float(2**j) for j in range(17))  # 1 .. 65536


def exp_power(x, mu: float, lam: float):
    """exp(mu * x**lam) for x >= 0, mu >= 0, lam in (0, 1]."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("exp_power is defined for nonnegative x")
    if mu < 0:
        raise ValueError(f"mu must be nonnegative, got {mu}")
    if not 0 < lam <= 1:
        raise ValueError(f"lam must lie in (0, 1], got {lam}")
    return np.exp(mu * x**lam)


def log_exp_power(x, mu: float, lam: float):
    """Log-domain variant mu * x**lam (overflow-safe companion)."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("log_exp_power is defined for nonnegative x")
    if mu < 0 or not 0 < lam <= 1:
        raise ValueError("need mu >= 0 and lam in (0, 1]")
    return mu * x**lam


def subadditivity_check(
    n_samples: int = 10_000,
    seed: int = 2025,
    x_max: float = 10.0,
    mu_max: float = 5.0,
    lam_range: tuple = (0.01, 1.0),
) -> dict:
    """Sampled submultiplicativity of exp_power in two arguments.

    Checked in the log domain, where the real inequality
    mu (x1 + x2)^lam <= mu x1^lam + mu x2^lam is strict for lam < 1; lam is
    drawn from the open-ended range, avoiding the lam = 1 equality boundary
    where a float comparison is a coin flip on the last ulp.
    """
    rng = np.random.Generator(np.random.Philox(key=[seed, 17]))
    x1 = rng.uniform(0.0, x_max, n_samples)
    x2 = rng.uniform(0.0, x_max, n_samples)
    mu = rng.uniform(0.0, mu_max, n_samples)
    lam = rng.uniform(lam_range[0], lam_range[1], n_samples)
    lhs = mu * (x1 + x2) ** lam
    rhs = mu * x1**lam + mu * x2**lam
    margin = rhs - lhs
    violations = int(np.sum(margin < 0))
    return {
        "samples": n_samples,
        "violations": violations,
        "min_margin": float(margin.min()),
        "passed": violations == 0,
    }


@dataclass
class BoundCheck:
    """Outcome of a ladder-searched inequality check on a solved instance."""

    check_id: str
    instance_id: str
    k_hat: float  # inf when the cap is exceeded
    verdict: str  # holds | unbounded_at_cap
    lam: float
    per_time_lhs: np.ndarray  # (times, components): max-node lhs
    per_time_rhs: np.ndarray  # rhs at the max-lhs node, evaluated at k_hat
    ladder: tuple = K_LADDER

    @property
    def holds(self) -> bool:
        return self.verdict == "holds"

    def rows(self) -> list:
        out = []
        n_t, n_c = self.per_time_lhs.shape
        for k in range(n_t):
            for i in range(n_c):
                out.append({
                    "check_id": self.check_id,
                    "instance_id": f"{self.instance_id}/t_index={k}/component={i}",
                    "lhs": self.per_time_lhs[k, i],
                    "rhs_core": self.per_time_rhs[k, i],
                    "K_hat": self.k_hat,
                    "verdict": self.verdict,
                })
        return out


def _alpha0_values(alpha0, times):
    if callable(alpha0):
        return np.asarray([float(alpha0(s)) for s in times])
    a = float(alpha0)
    if a < 0:
        raise ValueError("alpha0 must be nonnegative")
    return np.full(len(times), a)


def _z_energy_levels(tree, z_levels, weight_levels=None):
    """Backward accumulation of E_k[sum_{j>=k} h |Z_j|^2 (w_j)] per component."""
    N = tree.grid.steps
    h = tree.grid.h
    dim = z_levels[0].shape[-1]
    acc = np.zeros((N + 1, dim))
    out = [None] * (N + 1)
    out[N] = acc.copy()
    for k in range(N - 1, -1, -1):
        cond = 0.5 * (acc[1:] + acc[:-1])
        local = z_levels[k] ** 2
        if weight_levels is not None:
            local = local * weight_levels[k]
        acc = cond + h * local
        out[k] = acc
    return out


def exp_moment_bound_check(
    tree: BinomialTree,
    solution: TreeSolution,
    generator: GeneratorSpec,
    terminal: np.ndarray,
    alpha0,
    beta: float,
    delta: float,
    one_sided: bool = False,
    instance_id: str = "instance",
    ladder: Sequence[float] = K_LADDER,
) -> BoundCheck:
    """Search the smallest ladder constant closing the exponential moment
    bound on a solved instance; see the module docstring for the inequality.

    alpha0 is a nonnegative constant or deterministic function of s. Raises
    ValueError when the driver violates its declared one-sided growth along
    the computed solution (the bound is not claimed there).
    """
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    N = tree.grid.steps
    h = tree.grid.h
    times = tree.grid.times
    lam = 2.0 * delta / (1.0 + delta)
    term = np.asarray(terminal, dtype=float)
    if term.ndim == 1:
        term = term[:, None]
    dim = solution.dim
    a0 = _alpha0_values(alpha0, times)

    # structural gate: sign(Y) g <= alpha0 + beta |Z|^(1+delta) on the solution
    worst = -np.inf
    for k in range(N):
        y = solution.y_levels[k]
        z = solution.z_levels[k]
        g = generator.evaluate(times[k], times[k], y, z)
        sgn = np.where(y > 0, 1.0, 0.0) if one_sided else np.sign(y)
        lhs = sgn * g
        rhs = a0[k] + beta * np.abs(z) ** (1.0 + delta)
        worst = max(worst, float(np.max(lhs - rhs)))
    if worst > 1e-9:
        raise ValueError(
            "driver violates the one-sided growth condition along the solution "
            f"(worst margin {worst:.3e}); the exponential moment bound is not "
            "claimed for this instance"
        )

    if one_sided:
        weights = [np.where(solution.y_levels[k] > 0, 1.0, 0.0) for k in range(N)]
        energy = _z_energy_levels(tree, solution.z_levels, weights)
        xi_base = np.maximum(term, 0.0)
        y_base = [np.maximum(solution.y_levels[k], 0.0) for k in range(N + 1)]
    else:
        energy = _z_energy_levels(tree, solution.z_levels)
        xi_base = np.abs(term)
        y_base = [np.abs(solution.y_levels[k]) for k in range(N + 1)]

    integ = np.concatenate([np.cumsum((a0[:-1] * h)[::-1])[::-1], [0.0]])  # int_{t_k}^T alpha0
    lhs_levels = [np.exp(y_base[k] ** lam) + energy[k] for k in range(N + 1)]

    per_time_lhs = np.array([lv.max(axis=0) for lv in lhs_levels])  # (N+1, dim)
    argmax_nodes = [lv.argmax(axis=0) for lv in lhs_levels]

    k_hat = np.inf
    verdict = "unbounded_at_cap"
    per_time_rhs = np.full((N + 1, dim), np.nan)
    for K in ladder:
        ok = True
        rhs_snapshot = np.empty((N + 1, dim))
        for k in range(N + 1):
            exponent = K * (xi_base + integ[k]) ** lam
            u = exponent
            for j in range(N - 1, k - 1, -1):
                u = np.logaddexp(u[1:], u[:-1]) - np.log(2.0)
            rhs_k = np.exp(u)  # (k+1, dim)
            if np.any(lhs_levels[k] > K * rhs_k):
                ok = False
                break
            rhs_snapshot[k] = rhs_k[argmax_nodes[k], np.arange(dim)]
        if ok:
            k_hat = float(K)
            verdict = "holds"
            per_time_rhs = rhs_snapshot
            break
    return BoundCheck(
        check_id="exp_moment_bound" + ("_one_sided" if one_sided else ""),
        instance_id=instance_id, k_hat=k_hat, verdict=verdict, lam=lam,
        per_time_lhs=per_time_lhs, per_time_rhs=per_time_rhs, ladder=tuple(ladder),
    )


def exp_moment_bound_crosscheck(
    tree: BinomialTree,
    solution: TreeSolution,
    terminal: np.ndarray,
    alpha0,
    delta: float,
    K: float,
    one_sided: bool = False,
) -> float:
    """Max relative disagreement between the sweep-based conditional
    expectations of the bound check and an independent full-tree binomial
    reweighting, over all grid times and nodes (lhs energy and rhs at K)."""
    N = tree.grid.steps
    h = tree.grid.h
    times = tree.grid.times
    lam = 2.0 * delta / (1.0 + delta)
    term = np.asarray(terminal, dtype=float)
    if term.ndim == 1:
        term = term[:, None]
    a0 = _alpha0_values(alpha0, times)
    integ = np.concatenate([np.cumsum((a0[:-1] * h)[::-1])[::-1], [0.0]])

    if one_sided:
        weights = [np.where(solution.y_levels[k] > 0, 1.0, 0.0) for k in range(N)]
        xi_base = np.maximum(term, 0.0)
    else:
        weights = None
        xi_base = np.abs(term)
    energy = _z_energy_levels(tree, solution.z_levels, weights)

    worst = 0.0
    for k in range(N + 1):
        # energy via weights: sum_j h * reweight(level j -> k) of |Z_j|^2 (w_j)
        alt = np.zeros_like(energy[k])
        for j in range(k, N):
            f = solution.z_levels[j] ** 2
            if weights is not None:
                f = f * weights[j]
            alt += h * conditional_expectation_via_weights(tree, k, f, source_level=j)
        d = np.abs(alt - energy[k]) / np.maximum(1.0, np.abs(alt))
        worst = max(worst, float(d.max()))

        rhs_term = np.exp(K * (xi_base + integ[k]) ** lam)
        alt_rhs = conditional_expectation_via_weights(tree, k, rhs_term, source_level=N)
        u = K * (xi_base + integ[k]) ** lam
        for j in range(N - 1, k - 1, -1):
            u = np.logaddexp(u[1:], u[:-1]) - np.log(2.0)
        d = np.abs(alt_rhs - np.exp(u)) / np.maximum(1.0, np.abs(alt_rhs))
        worst = max(worst, float(d.max()))
    return worst


@dataclass
class BmoEstimate:
    """Grid-approximated bounded-mean-oscillation size of a martingale field.

    squared_profile[k] = max over level-k nodes of E_k[sum_{j>=k} h |Z_j|^2]
    (components summed, Euclidean); value = sup over k; norm = sqrt(value).
    The sup runs over grid stopping times only, hence "estimate". For
    deterministic fields the profile is the exact tail integral and is
    non-increasing in k; adapted fields can concentrate on late branches, so
    no monotonicity is claimed in general. mc-based estimates set proxy=True.
    """

    kind: str
    squared_profile: np.ndarray
    value: float
    proxy: bool = False
    k_w: float = 0.0
    per_outer: np.ndarray | None = None

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.value))


def bmo_estimate(tree: BinomialTree, z_levels: list) -> BmoEstimate:
    """BMO size of a plain solution's martingale field on the tree."""
    squared = [(z**2).sum(axis=-1) if z.ndim > 1 else z**2 for z in z_levels]
    N = tree.grid.steps
    h = tree.grid.h
    acc = np.zeros(N + 1)
    profile = np.empty(N + 1)
    profile[N] = 0.0
    for k in range(N - 1, -1, -1):
        acc = 0.5 * (acc[1:] + acc[:-1]) + h * squared[k]
        profile[k] = acc.max()
    return BmoEstimate(kind="bsde", squared_profile=profile, value=float(profile.max()))


def bmo_estimate_bsvie(tree: BinomialTree, family, k_w: float = 0.0) -> BmoEstimate:
    """Weighted sup over outer times of the inner fields' BMO sizes.

    family is a tree FamilySolution; per_outer[i] is the squared BMO size of
    Z(t_i, .) on [t_i, T], and value = max_i exp(k_w t_i) per_outer[i].
    """
    N = tree.grid.steps
    h = tree.grid.h
    times = tree.grid.times
    per_outer = np.zeros(N + 1)
    for i in range(N + 1):
        zl = family.zeta[i]
        if not zl:
            continue
        best = 0.0
        acc = np.zeros(N + 1)
        for j in range(N - 1, i - 1, -1):
            sq = (zl[j - i] ** 2).sum(axis=-1)
            acc = 0.5 * (acc[1:] + acc[:-1]) + h * sq
            best = max(best, float(acc.max()))
        per_outer[i] = best
    weighted = np.exp(k_w * times) * per_outer
    k_star = int(np.argmax(weighted))
    return BmoEstimate(
        kind="bsvie", squared_profile=weighted, value=float(weighted[k_star]),
        k_w=k_w, per_outer=per_outer,
    )


@dataclass
class ContractionTrace:
    rate: float
    slope: float
    n_used: int
    verdict: str  # contraction | expansion

    @property
    def is_contraction(self) -> bool:
        return self.verdict == "contraction"


def contraction_trace(report: PicardReport) -> ContractionTrace:
    """Least-squares geometric rate of the outer update sizes.

    Fits log Delta_m against m over the positive entries (trailing exact
    zeros are dropped); needs at least 3 usable iterations. rate = exp(slope).
    """
    deltas = np.asarray(report.deltas, dtype=float)
    while deltas.size and deltas[-1] == 0.0:
        deltas = deltas[:-1]
    if deltas.size < 3:
        raise ValueError(
            f"contraction fit needs >= 3 positive update sizes, got {deltas.size}"
        )
    if np.any(deltas <= 0):
        raise ValueError("update sizes must be positive for the geometric fit")
    m = np.arange(1, deltas.size + 1, dtype=float)
    fit = sstats.linregress(m, np.log(deltas))
    rate = float(np.exp(fit.slope))
    return ContractionTrace(
        rate=rate, slope=float(fit.slope), n_used=int(deltas.size),
        verdict="contraction" if rate < 1.0 else "expansion",
    )


@dataclass
class SuperquadDemoReport:
    p: float
    terminal_scale: float
    ladder: tuple
    max_abs_y: list
    max_abs_z: list
    failures: list  # None or error string per ladder entry
    verdict: str  # instability observed | stable

    def rows(self) -> list:
        out = []
        for N, y, z, f in zip(self.ladder, self.max_abs_y, self.max_abs_z, self.failures):
            out.append({
                "check_id": "superquad_demo",
                "instance_id": f"steps={N}",
                "lhs": z if z is not None else np.nan,
                "rhs_core": y if y is not None else np.nan,
                "K_hat": np.nan,
                "verdict": f or "finite",
            })
        return out


def superquad_demo(
    p: float = 3.0,
    terminal_scale: float = 8.0,
    ladder: Sequence[int] = (8, 16, 32, 64),
    horizon: float = 1.0,
    scale: float = 1.0,
    growth_threshold: float = 2.0,
) -> SuperquadDemoReport:
    """Refinement-ladder stress run for a super-quadratic driver.

    Solves the scalar equation with driver scale * |z|^p and terminal
    terminal_scale * tanh(W_T) for each step count in the ladder, recording
    max |Y|, max |Z| and failures (blow-up / stalled inner iteration, which
    are expected and caught here, unlike everywhere else). Verdict is
    "instability observed" when any run fails or when max |Z| grows
    monotonically across the ladder by at least growth_threshold; a zero
    terminal stays exactly zero and reports "stable".
    """
    gen = GeneratorSpec("superquad", p=p, gamma=scale)
    max_y, max_z, fails = [], [], []
    for N in ladder:
        tree = build_tree(make_grid(horizon, int(N)))
        term = terminal_scale * np.tanh(tree.terminal_nodes)
        try:
            # overflow to inf is the expected failure mode here and is caught
            # as a blow-up; keep the run quiet about it
            with np.errstate(over="ignore", invalid="ignore"):
                sol = solve_bsde_tree(tree, gen, term, TreeSolveConfig(scheme="implicit"))
        except (NumericBlowupError, InnerIterationError) as exc:
            max_y.append(None)
            max_z.append(None)
            fails.append(f"{type(exc).__name__}@step_{getattr(exc, 'level', -1)}")
            continue
        max_y.append(float(max(np.max(np.abs(f)) for f in sol.y_levels)))
        max_z.append(float(max(np.max(np.abs(f)) for f in sol.z_levels)))
        fails.append(None)
    any_fail = any(f is not None for f in fails)
    zs = [z for z in max_z if z is not None]
    growing = (
        len(zs) == len(ladder)
        and len(zs) >= 2
        and all(b > a for a, b in zip(zs, zs[1:]))
        and zs[-1] >= growth_threshold * max(zs[0], 1e-300)
    )
    if terminal_scale == 0.0:
        verdict = "stable"
    else:
        verdict = "instability observed" if (any_fail or growing) else "stable"
    return SuperquadDemoReport(
        p=p, terminal_scale=terminal_scale, ladder=tuple(int(N) for N in ladder),
        max_abs_y=max_y, max_abs_z=max_z, failures=fails, verdict=verdict,
    )
