"""Regression Monte Carlo backward induction (Longstaff-Schwartz style).

Conditional expectations are replaced by ridge-regularized least-squares
projections onto a Markovian basis in the Brownian state W_t. All reductions
run over fixed-size path blocks in a fixed order, so results are
bit-reproducible for a given ensemble regardless of how the caller
parallelizes around the solver. The martingale coefficient is the projection
of Y_{k+1} dW / h and is truncated symmetrically at z_max before it enters
the driver (variance control for super-linear drivers).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from .errors import InnerIterationError, NumericBlowupError, RegularizationNeededError
from .grids import PathEnsemble
from .problems import GeneratorSpec
from .tree_solver import as_driver

__all__ = ["BasisSpec", "McSolveConfig", "McSolution", "regress", "solve_bsde_mc"]

log = logging.getLogger("bsvie.mc")

_BLOCK = 4096  # fixed reduction block, part of the reproducibility contract


@dataclass(frozen=True)
class BasisSpec:
    """Regression basis in the Brownian state.

    polynomial_in_W: powers 0..degree of W_t / sqrt(max(t, h)) (the scaling
    keeps the Gram matrix conditioned; the span is unchanged).
    indicator_bins: one-hot membership in `bins` intervals partitioning
    [-4 sigma, 4 sigma] with open outer bins (a partition, so constants are
    representable).
    """

    family: str = "polynomial_in_W"
    degree: int = 2
    bins: int = 8
    ridge: float = 1e-10

    def __post_init__(self):
        if self.family not in ("polynomial_in_W", "indicator_bins"):
            raise ValueError(f"unknown basis family {self.family!r}")
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if self.bins < 2:
            raise ValueError("bins must be >= 2")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")

    @property
    def size(self) -> int:
        return self.degree + 1 if self.family == "polynomial_in_W" else self.bins

    def features(self, w: np.ndarray, t: float, h: float) -> np.ndarray:
        """Feature matrix, shape (len(w), size)."""
        sigma = float(np.sqrt(max(t, h)))
        x = np.asarray(w, dtype=float) / sigma
        if self.family == "polynomial_in_W":
            return np.vander(x, self.degree + 1, increasing=True)
        edges = np.linspace(-4.0, 4.0, self.bins - 1)
        idx = np.searchsorted(edges, x)
        out = np.zeros((x.size, self.bins))
        out[np.arange(x.size), idx] = 1.0
        return out


@dataclass(frozen=True)
class McSolveConfig:
    scheme: str = "implicit"
    eps_inner: float = 1e-12
    max_inner: int = 50
    z_max: float = 50.0

    def __post_init__(self):
        if self.scheme not in ("implicit", "explicit"):
            raise ValueError(f"scheme must be implicit or explicit, got {self.scheme!r}")
        if self.eps_inner <= 0 or self.max_inner < 1 or self.z_max <= 0:
            raise ValueError("eps_inner, max_inner, z_max must be positive")


def _gram_and_cross(F: np.ndarray, targets: np.ndarray):
    """Normal-equation blocks accumulated sequentially over path blocks."""
    B = F.shape[1]
    G = np.zeros((B, B))
    c = np.zeros((B,) + targets.shape[1:])
    for lo in range(0, F.shape[0], _BLOCK):
        Fb = F[lo : lo + _BLOCK]
        tb = targets[lo : lo + _BLOCK]
        G += Fb.T @ Fb
        c += Fb.T @ tb
    return G, c


def regress(features: np.ndarray, targets: np.ndarray, ridge: float = 1e-10):
    """Solve (F'F + ridge I) c = F' y; returns (coefficients, info).

    info carries the condition estimate of the regularized Gram matrix and
    the fit residual RMS. A singular system with ridge = 0 raises
    RegularizationNeededError instead of silently pseudo-inverting.
    """
    F = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if F.shape[0] != y.shape[0]:
        raise ValueError("feature/target row mismatch")
    G, c = _gram_and_cross(F, y)
    G[np.diag_indices_from(G)] += ridge
    try:
        cho = linalg.cho_factor(G, lower=True)
    except linalg.LinAlgError as exc:
        if ridge == 0:
            raise RegularizationNeededError(
                "singular normal equations with ridge=0; supply a positive ridge"
            ) from exc
        raise
    coef = linalg.cho_solve(cho, c)
    eig = np.linalg.eigvalsh(G)
    cond = float(eig[-1] / eig[0]) if eig[0] > 0 else np.inf
    fit = F @ coef
    resid_rms = float(np.sqrt(np.mean((y - fit) ** 2)))
    return coef, {"cond": cond, "resid_rms": resid_rms}


def _regress_auto(F, y, ridge):
    """regress() with automatic ridge escalation on numerically singular Grams."""
    r = ridge
    for _ in range(4):
        try:
            return regress(F, y, r), r
        except linalg.LinAlgError:
            r = max(r, 1e-12) * 1e3
            log.warning("singular normal equations, escalating ridge to %.1e", r)
    coef, info = regress(F, y, r)
    return (coef, info), r


@dataclass
class McSolution:
    """Per-path solution fields and per-step regression diagnostics.

    y has shape (M, steps + 1, dim); z (M, steps, dim) aligned with the left
    endpoint of each interval. Coefficient tables (steps, basis, dim) are the
    adapted functional representation: the field value at step k is a function
    of W_{t_k} only, which is what `evaluate_z` exposes.
    """

    ensemble: PathEnsemble
    basis: BasisSpec
    config: McSolveConfig
    y: np.ndarray
    z: np.ndarray
    y_coef: np.ndarray
    z_coef: np.ndarray
    step_diagnostics: dict
    dim: int = field(init=False)

    def __post_init__(self):
        self.dim = self.y.shape[-1]

    def root_mean(self) -> np.ndarray:
        return self.y[:, 0, :].mean(axis=0)

    def evaluate_z(self, k: int, w_values: np.ndarray) -> np.ndarray:
        """Adapted evaluation of the step-k martingale coefficient at given
        Brownian states (independent of anything after t_k)."""
        grid = self.ensemble.grid
        F = self.basis.features(np.atleast_1d(w_values), grid.time(k), grid.h)
        raw = F @ self.z_coef[k]
        return np.clip(raw, -self.config.z_max, self.config.z_max)


def solve_bsde_mc(
    ensemble: PathEnsemble,
    generator: GeneratorSpec | Callable,
    terminal: np.ndarray,
    basis: BasisSpec | None = None,
    config: McSolveConfig | None = None,
) -> McSolution:
    """Backward regression solve along a path ensemble.

    terminal is the per-path terminal value, shape (M,) or (M, dim). The
    driver is evaluated per path on the implicit fixed point in Y with the
    truncated regression Z lagged, mirroring the tree scheme.
    """
    basis = basis or BasisSpec()
    cfg = config or McSolveConfig()
    driver = as_driver(generator)
    grid = ensemble.grid
    N, h = grid.steps, grid.h
    M = ensemble.n_paths
    term = np.asarray(terminal, dtype=float)
    if term.ndim == 1:
        term = term[:, None]
    if term.shape[0] != M:
        raise ValueError("terminal rows must equal the number of paths")
    if isinstance(generator, GeneratorSpec) and term.shape[1] != generator.dim:
        raise ValueError(
            f"terminal has {term.shape[1]} component(s) but the driver "
            f"declares dim={generator.dim}"
        )
    if not np.all(np.isfinite(term)):
        raise NumericBlowupError(N, "terminal")
    dim = term.shape[1]
    B = basis.size

    y = np.empty((M, N + 1, dim))
    z = np.empty((M, N, dim))
    y_coef = np.empty((N, B, dim))
    z_coef = np.empty((N, B, dim))
    diag = {
        "cond": np.empty(N),
        "y_resid_rms": np.empty((N, dim)),
        "z_resid_rms": np.empty((N, dim)),
        "truncation_rate": np.empty(N),
        "max_abs_y": np.empty(N),
        "inner_iterations": np.zeros(N, dtype=int),
        "inner_residuals": np.zeros(N),
        "ridge_used": np.empty(N),
    }

    y[:, N, :] = term
    y_next = term
    for k in range(N - 1, -1, -1):
        t_k = grid.time(k)
        F = basis.features(ensemble.paths[:, k], t_k, h)
        dw = ensemble.increments[:, k]

        (zc, z_info), ridge_z = _regress_auto(F, y_next * (dw / h)[:, None], basis.ridge)
        raw_z = F @ zc
        zk = np.clip(raw_z, -cfg.z_max, cfg.z_max)
        diag["truncation_rate"][k] = float(np.mean(np.any(np.abs(raw_z) > cfg.z_max, axis=-1)))

        (yc, y_info), ridge_y = _regress_auto(F, y_next, basis.ridge)
        proj = F @ yc

        if cfg.scheme == "explicit":
            yk = proj + h * driver(k, t_k, proj, zk)
            if not np.all(np.isfinite(yk)):
                raise NumericBlowupError(k)
        else:
            y_prev = proj
            for m in range(1, cfg.max_inner + 1):
                y_new = proj + h * driver(k, t_k, y_prev, zk)
                if not np.all(np.isfinite(y_new)):
                    raise NumericBlowupError(k)
                delta = float(np.max(np.abs(y_new - y_prev)))
                if delta <= cfg.eps_inner:
                    break
                y_prev = y_new
            else:
                raise InnerIterationError(k, delta, cfg.eps_inner, cfg.max_inner)
            yk = y_prev
            diag["inner_iterations"][k] = m
            diag["inner_residuals"][k] = delta

        y[:, k, :] = yk
        z[:, k, :] = zk
        y_coef[k] = yc
        z_coef[k] = zc
        diag["cond"][k] = max(z_info["cond"], y_info["cond"])
        # per-component residuals of the Y projection and the Z regression
        diag["y_resid_rms"][k] = np.sqrt(np.mean((y_next - proj) ** 2, axis=0))
        diag["z_resid_rms"][k] = np.sqrt(
            np.mean((y_next * (dw / h)[:, None] - raw_z) ** 2, axis=0)
        )
        diag["max_abs_y"][k] = float(np.max(np.abs(yk)))
        diag["ridge_used"][k] = max(ridge_z, ridge_y)
        y_next = yk

    return McSolution(ensemble, basis, cfg, y, z, y_coef, z_coef, diag)
