"""Problem catalog: driver families, free terms, and hypothesis checkers.

Drivers g(t, s, y, z) map R x R x R^n x R^n -> R^n and are evaluated
vectorized over leading axes. The first time argument t is the (frozen) outer
time of a Volterra problem; plain backward equations pass t = s. Components of
z enter either only through the own component z^i ("diagonal" families) or
through cross terms, which is what the structure flags record.

Hypothesis checkers sample the documented growth/regularity inequalities and
return an AssumptionReport instead of asserting, so callers can route verdicts
into reports. Hypothesis ids:

- ``diagonally_quadratic``: two-sided band, strictly quadratic in the own
  component from below, sub-quadratic cross terms.
- ``mixed_growth``: quadratic-in-own-component growth for a leading block of
  components, linear growth in the trailing block.
- ``diagonal_subquadratic_convex``: diagonal dependence, at-most-power
  1 + delta growth in z^i, Lipschitz in y, and the one-sided convexity-type
  segment inequality in z^i.
- ``superquadratic_growth``: zero at z = 0 and g / |z|^2 -> infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import EvaluationDomainError

__all__ = [
    "GeneratorSpec",
    "FreeTermSpec",
    "Problem",
    "SampleConfig",
    "AssumptionReport",
    "eval_generator",
    "eval_free_term",
    "check_assumptions",
    "catalog_list",
    "sign_flip_generator",
    "power_to_delta",
    "delta_to_power",
    "GENERATOR_FAMILIES",
    "FREE_TERM_FUNCTIONALS",
    "HYPOTHESIS_IDS",
]

GENERATOR_FAMILIES = (
    "linear",
    "entropic_diag",
    "subquad_diag",
    "diag_strict_quad_example",
    "mixed_lin_quad",
    "superquad",
    "user_table",
)

FREE_TERM_FUNCTIONALS = (
    "constant",
    "terminal_value",
    "bounded_sin",
    "tanh_scaled",
    "user_table",
)

TIME_PROFILES = ("none", "linear_decay", "affine_decay")

HYPOTHESIS_IDS = (
    "diagonally_quadratic",
    "mixed_growth",
    "diagonal_subquadratic_convex",
    "superquadratic_growth",
)


def power_to_delta(a: float) -> float:
    """Map an odd-power exponent a in (0, 1] to the driver exponent delta.

    The extended-risk driver grows like |z|^(2 / (2 - a)) = |z|^(1 + delta)
    with delta = a / (2 - a).
    """
    if not 0 < a <= 1:
        raise ValueError(f"power exponent must lie in (0, 1], got {a}")
    return a / (2.0 - a)


def delta_to_power(delta: float) -> float:
    """Inverse of power_to_delta: a = 2 * delta / (1 + delta)."""
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    return 2.0 * delta / (1.0 + delta)


def _check_alpha(alpha):
    if callable(alpha):
        return
    if not (np.isfinite(alpha) and alpha >= 0):
        raise ValueError(f"alpha must be a nonnegative constant or callable, got {alpha}")


@dataclass(frozen=True)
class GeneratorSpec:
    """A driver from the catalog, or a user callback with declared structure.

    Parameters
    ----------
    family : str
        One of GENERATOR_FAMILIES.
    dim : int
        Number of components n.
    alpha : float or callable
        Additive bound process used by hypothesis checks; a constant or a
        deterministic function of (t, s). Not part of any catalog formula.
    beta, gamma, delta, kappa, p, split : float / int
        Family parameters; unused ones are ignored by `evaluate` but kept in
        the descriptor. `split` counts the leading quadratic block of
        mixed_lin_quad (1-based, 1 <= split < dim).
    coef_y, coef_z : float
        Linear coefficients on own-component y and z where the family admits
        them (default 0 keeps the pure catalog formulas).
    fn : callable, optional
        user_table driver fn(t, s, y, z) -> array(..., dim); required for and
        only allowed with family="user_table".
    t_dependent, diagonal_in_z, convex_in_z : bool
        Structure flags; derived for catalog families, declared for user_table.
    """

    family: str
    dim: int = 1
    alpha: float | Callable[[float, float], float] = 0.0
    beta: float = 0.0
    gamma: float = 1.0
    delta: float = 1.0
    kappa: float = 1.0
    p: float = 3.0
    split: int = 0
    coef_y: float = 0.0
    coef_z: float = 0.0
    fn: Callable | None = None
    t_dependent: bool = False
    diagonal_in_z: bool = True
    convex_in_z: bool = True

    def __post_init__(self):
        if self.family not in GENERATOR_FAMILIES:
            raise ValueError(f"unknown driver family {self.family!r}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        _check_alpha(self.alpha)
        if self.family == "user_table":
            if self.fn is None:
                raise ValueError("user_table requires fn")
        else:
            if self.fn is not None:
                raise ValueError("fn is only allowed with family user_table")
        flags = {}
        if self.family == "linear":
            flags = dict(t_dependent=False, diagonal_in_z=True, convex_in_z=True)
        elif self.family == "entropic_diag":
            if self.gamma <= 0:
                raise ValueError(f"entropic_diag needs gamma > 0, got {self.gamma}")
            flags = dict(t_dependent=False, diagonal_in_z=True, convex_in_z=True, delta=1.0)
        elif self.family == "subquad_diag":
            if self.gamma <= 0:
                raise ValueError(f"subquad_diag needs gamma > 0, got {self.gamma}")
            if self.kappa <= 0:
                raise ValueError(f"subquad_diag needs kappa > 0, got {self.kappa}")
            if not 0 < self.delta < 1:
                raise ValueError(f"subquad_diag needs delta in (0, 1), got {self.delta}")
            flags = dict(t_dependent=False, diagonal_in_z=True, convex_in_z=True)
        elif self.family == "diag_strict_quad_example":
            if not 0 <= self.delta < 1:
                raise ValueError(
                    f"diag_strict_quad_example needs delta in [0, 1), got {self.delta}"
                )
            flags = dict(t_dependent=False, diagonal_in_z=(self.dim == 1), convex_in_z=False)
        elif self.family == "mixed_lin_quad":
            if not 1 <= self.split < self.dim:
                raise ValueError(
                    f"mixed_lin_quad needs 1 <= split < dim, got split={self.split}, dim={self.dim}"
                )
            if self.gamma <= 0:
                raise ValueError(f"mixed_lin_quad needs gamma > 0, got {self.gamma}")
            if self.beta < 0:
                raise ValueError(f"mixed_lin_quad needs beta >= 0, got {self.beta}")
            flags = dict(t_dependent=False, diagonal_in_z=False, convex_in_z=True)
        elif self.family == "superquad":
            if self.p <= 2:
                raise ValueError(f"superquad needs p > 2, got {self.p}")
            if self.gamma <= 0:
                raise ValueError(f"superquad needs gamma > 0, got {self.gamma}")
            if self.coef_y != 0:
                raise ValueError("superquad drivers vanish at z=0 and admit no y term")
            flags = dict(t_dependent=False, diagonal_in_z=True, convex_in_z=True)
        for k, v in flags.items():
            object.__setattr__(self, k, v)

    def alpha_at(self, t, s):
        return self.alpha(t, s) if callable(self.alpha) else self.alpha

    def evaluate(self, t, s, y, z) -> np.ndarray:
        """Driver value, broadcast over leading axes of y and z (..., dim)."""
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        if y.shape[-1] != self.dim or z.shape[-1] != self.dim:
            raise EvaluationDomainError(
                f"y/z trailing axis must equal dim={self.dim}, got {y.shape} / {z.shape}"
            )
        if np.any(np.asarray(t) > np.asarray(s) + 1e-12):
            raise EvaluationDomainError("outer time t must satisfy t <= s")
        fam = self.family
        if fam == "linear":
            return self.coef_y * y + self.coef_z * z
        if fam == "entropic_diag":
            return self.coef_y * y + 0.5 * self.gamma * z * z
        if fam == "subquad_diag":
            c = self.gamma / self.kappa
            return self.coef_y * y + c * np.abs(z) ** (1.0 + self.delta)
        if fam == "diag_strict_quad_example":
            ay = np.linalg.norm(y, axis=-1, keepdims=True)
            az = np.linalg.norm(z, axis=-1, keepdims=True)
            root = np.sqrt((ay + 1.0) * (az + 1.0))
            return root + az * np.cos(np.abs(z)) - az ** (1.0 + self.delta) + z * z
        if fam == "mixed_lin_quad":
            out = self.coef_y * y.copy()
            k = self.split
            out[..., :k] += 0.5 * self.gamma * z[..., :k] ** 2
            tail = np.sum(z[..., k:], axis=-1, keepdims=True)
            out[..., k:] += self.beta * tail
            return out
        if fam == "superquad":
            return self.gamma * np.abs(z) ** self.p
        out = np.asarray(self.fn(t, s, y, z), dtype=float)
        if out.shape != y.shape:
            raise EvaluationDomainError(
                f"user_table driver returned shape {out.shape}, expected {y.shape}"
            )
        return out

    def descriptor(self) -> dict:
        """Stable, JSON-friendly catalog descriptor."""
        d = {
            "family": self.family,
            "dim": self.dim,
            "alpha": "callable" if callable(self.alpha) else self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "delta": self.delta,
            "kappa": self.kappa,
            "p": self.p,
            "split": self.split,
            "coef_y": self.coef_y,
            "coef_z": self.coef_z,
            "t_dependent": self.t_dependent,
            "diagonal_in_z": self.diagonal_in_z,
            "convex_in_z": self.convex_in_z,
        }
        return d


@dataclass(frozen=True)
class FreeTermSpec:
    """Terminal functional (kind="terminal") or first-time-indexed family of
    them (kind="process"), built from a catalog functional of the terminal
    Brownian value with an optional deterministic time profile.

    functional semantics per component (w is the terminal Brownian value):
      constant       -> scale
      terminal_value -> scale * w
      bounded_sin    -> scale * sin(w)
      tanh_scaled    -> scale * tanh(w)
      user_table     -> fn(w), declared bound required for boundedness

    time_profile weights (process kind only; t is the outer time):
      none         -> 1
      linear_decay -> (T - t) / T
      affine_decay -> (T - t + 1) / (T + 1)
    """

    kind: str = "terminal"
    functional: str = "constant"
    scale: float | Sequence[float] = 1.0
    dim: int = 1
    time_profile: str = "none"
    bound: float | None = None
    fn: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("terminal", "process"):
            raise ValueError(f"kind must be terminal or process, got {self.kind!r}")
        if self.functional not in FREE_TERM_FUNCTIONALS:
            raise ValueError(f"unknown free-term functional {self.functional!r}")
        if self.time_profile not in TIME_PROFILES:
            raise ValueError(f"unknown time profile {self.time_profile!r}")
        if self.kind == "terminal" and self.time_profile != "none":
            raise ValueError("terminal free terms admit no time profile")
        if self.functional == "user_table" and self.fn is None:
            raise ValueError("user_table requires fn")
        if self.functional != "user_table" and self.fn is not None:
            raise ValueError("fn is only allowed with functional user_table")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        s = np.atleast_1d(np.asarray(self.scale, dtype=float))
        if s.shape not in ((1,), (self.dim,)):
            raise ValueError(f"scale must be scalar or length {self.dim}")

    @property
    def scale_vector(self) -> np.ndarray:
        s = np.atleast_1d(np.asarray(self.scale, dtype=float))
        return np.broadcast_to(s, (self.dim,))

    def is_bounded(self) -> bool:
        if self.functional in ("constant", "bounded_sin", "tanh_scaled"):
            return True
        if self.functional == "user_table":
            return self.bound is not None
        return False

    def sup_bound(self) -> float | None:
        if self.functional in ("constant", "bounded_sin", "tanh_scaled"):
            return float(np.max(np.abs(self.scale_vector)))
        return self.bound

    def base_values(self, w) -> np.ndarray:
        """Functional of the terminal value, shape w.shape + (dim,)."""
        w = np.asarray(w, dtype=float)
        s = self.scale_vector
        if self.functional == "constant":
            return np.broadcast_to(s, w.shape + (self.dim,)).copy()
        if self.functional == "terminal_value":
            return w[..., None] * s
        if self.functional == "bounded_sin":
            return np.sin(w)[..., None] * s
        if self.functional == "tanh_scaled":
            return np.tanh(w)[..., None] * s
        out = np.asarray(self.fn(w), dtype=float)
        if out.shape != w.shape + (self.dim,):
            raise EvaluationDomainError(
                f"user_table free term returned shape {out.shape}, "
                f"expected {w.shape + (self.dim,)}"
            )
        return out

    def profile_weight(self, t: float, horizon: float) -> float:
        if self.time_profile == "linear_decay":
            return (horizon - t) / horizon
        if self.time_profile == "affine_decay":
            return (horizon - t + 1.0) / (horizon + 1.0)
        return 1.0

    def values_at(self, t: float, w, horizon: float) -> np.ndarray:
        """Free term at outer time t as a functional of the terminal value."""
        if t < -1e-12 or t > horizon + 1e-12:
            raise EvaluationDomainError(f"outer time {t} outside [0, {horizon}]")
        return self.base_values(w) * self.profile_weight(t, horizon)


@dataclass(frozen=True)
class Problem:
    """A driver / free-term pair on a fixed horizon."""

    generator: GeneratorSpec
    free_term: FreeTermSpec
    horizon: float = 1.0

    def __post_init__(self):
        if self.generator.dim != self.free_term.dim:
            raise ValueError(
                f"driver dim {self.generator.dim} != free term dim {self.free_term.dim}"
            )
        if not (self.horizon > 0 and np.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive, got {self.horizon}")

    @property
    def dim(self) -> int:
        return self.generator.dim


def eval_generator(spec: GeneratorSpec, t, s, y, z) -> np.ndarray:
    """Checked driver evaluation: domain (t <= s) and finite inputs/outputs."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
        raise EvaluationDomainError("non-finite y or z")
    out = spec.evaluate(t, s, y, z)
    if not np.all(np.isfinite(out)):
        raise EvaluationDomainError("driver produced non-finite values")
    return out


def eval_free_term(spec: FreeTermSpec, t: float, w, horizon: float) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise EvaluationDomainError("non-finite terminal values")
    return spec.values_at(t, w, horizon)


def sign_flip_generator(spec: GeneratorSpec, split: int) -> GeneratorSpec:
    """Relabel a driver by negating z and y components after `split` and the
    trailing driver components themselves.

    The relabeled driver satisfies the convex-form segment inequality exactly
    when the original satisfies the mirrored (concave-form) one on the
    trailing block, so checkers can test either orientation.
    """
    if not 0 <= split <= spec.dim:
        raise ValueError(f"split must lie in 0..{spec.dim}")
    sgn = np.ones(spec.dim)
    sgn[split:] = -1.0

    def flipped(t, s, y, z):
        out = spec.evaluate(t, s, np.asarray(y) * sgn, np.asarray(z) * sgn)
        return out * sgn

    return GeneratorSpec(
        family="user_table",
        dim=spec.dim,
        alpha=spec.alpha,
        beta=spec.beta,
        gamma=spec.gamma,
        delta=spec.delta,
        fn=flipped,
        t_dependent=spec.t_dependent,
        diagonal_in_z=spec.diagonal_in_z,
        convex_in_z=False,
    )


@dataclass(frozen=True)
class SampleConfig:
    """Sampling plan for hypothesis checks.

    Constants default to the driver under test (alpha/beta/gamma/delta fields
    of the GeneratorSpec); overrides pin them explicitly. The box is the
    sup-norm radius for y and z samples.
    """

    seed: int = 0
    n_samples: int = 2000
    box: float = 10.0
    horizon: float = 1.0
    n_theta: int = 8
    alpha: float | None = None
    beta: float | None = None
    gamma: float | None = None
    delta: float | None = None
    float_slack: float = 1e-9

    def constants_for(self, spec: GeneratorSpec):
        a = self.alpha if self.alpha is not None else spec.alpha
        b = self.beta if self.beta is not None else spec.beta
        g = self.gamma if self.gamma is not None else spec.gamma
        d = self.delta if self.delta is not None else spec.delta
        return a, b, g, d


@dataclass
class AssumptionReport:
    hypothesis: str
    family: str
    n_samples: int
    n_violations: int
    passed: bool
    violations: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def summary(self) -> str:
        verdict = "pass" if self.passed else "fail"
        return (
            f"{self.hypothesis} on {self.family}: {verdict} "
            f"({self.n_violations}/{self.n_samples} violations)"
        )


def _sample_points(spec: GeneratorSpec, cfg: SampleConfig, rng: np.random.Generator):
    n = spec.dim
    S = cfg.n_samples
    t = rng.uniform(0.0, cfg.horizon, S)
    s = t + rng.uniform(0.0, 1.0, S) * (cfg.horizon - t)
    y = rng.uniform(-cfg.box, cfg.box, (S, n))
    z = rng.uniform(-cfg.box, cfg.box, (S, n))
    return t, s, y, z


def _alpha_values(alpha, t, s):
    if callable(alpha):
        return np.asarray([alpha(ti, si) for ti, si in zip(t, s)])
    return np.full_like(np.asarray(t, dtype=float), float(alpha))


def _record(violations, limit, **kw):
    if len(violations) < limit:
        violations.append(kw)


def check_assumptions(
    spec: GeneratorSpec, hypothesis: str, sample: SampleConfig | None = None
) -> AssumptionReport:
    """Sample a hypothesis class's inequalities on the given driver.

    Returns an AssumptionReport; never raises on violation. Sampled checks use
    a deterministic generator from sample.seed, with a relative float slack on
    each inequality (SampleConfig.float_slack) so exact-equality boundary
    cases do not flip on rounding.
    """
    if hypothesis not in HYPOTHESIS_IDS:
        raise ValueError(f"unknown hypothesis id {hypothesis!r}; known: {HYPOTHESIS_IDS}")
    cfg = sample or SampleConfig()
    rng = np.random.Generator(np.random.Philox(key=[cfg.seed, 0]))
    if hypothesis == "diagonally_quadratic":
        return _check_diagonally_quadratic(spec, cfg, rng)
    if hypothesis == "mixed_growth":
        return _check_mixed_growth(spec, cfg, rng)
    if hypothesis == "diagonal_subquadratic_convex":
        return _check_diag_subquad_convex(spec, cfg, rng)
    return _check_superquadratic(spec, cfg, rng)


def _check_diagonally_quadratic(spec, cfg, rng):
    a_c, b_c, g_c, d_c = cfg.constants_for(spec)
    t, s, y, z = _sample_points(spec, cfg, rng)
    a = _alpha_values(a_c, t, s)
    g = spec.evaluate(t, s, y, z)
    ay = np.linalg.norm(y, axis=-1)
    pz = np.abs(z) ** (1.0 + d_c)
    cross = pz.sum(axis=-1, keepdims=True) - pz
    slack = cfg.float_slack * (1.0 + np.abs(g))
    lower = (-a[:, None] - b_c * (ay[:, None] + cross) + g_c * z * z) - g
    upper = g - (a[:, None] + b_c * (ay[:, None] + cross + z * z))
    bad = np.maximum(lower, upper) > slack
    violations = []
    idx = np.argwhere(bad)
    for row, i in idx[:10]:
        side = "lower" if lower[row, i] > upper[row, i] else "upper"
        _record(
            violations, 10,
            point=dict(t=float(t[row]), s=float(s[row]), y=y[row].tolist(), z=z[row].tolist()),
            component=int(i), inequality=f"two_sided_band_{side}",
            lhs=float(g[row, i]), margin=float(max(lower[row, i], upper[row, i])),
        )
    n_bad = int(bad.any(axis=-1).sum())
    return AssumptionReport(
        hypothesis="diagonally_quadratic", family=spec.family,
        n_samples=cfg.n_samples, n_violations=n_bad, passed=n_bad == 0,
        violations=violations,
        details=dict(alpha=a_c if not callable(a_c) else "callable", beta=b_c, gamma=g_c, delta=d_c),
    )


def _check_mixed_growth(spec, cfg, rng):
    a_c, b_c, _, _ = cfg.constants_for(spec)
    k = spec.split if spec.family == "mixed_lin_quad" else max(spec.split, 0)
    if not 0 <= k <= spec.dim:
        raise ValueError(f"split {k} outside 0..{spec.dim}")
    t, s, y, z = _sample_points(spec, cfg, rng)
    a = _alpha_values(a_c, t, s)
    g = np.abs(spec.evaluate(t, s, y, z))
    ay = np.linalg.norm(y, axis=-1)
    tail = np.abs(z[:, k:]).sum(axis=-1)
    bound = np.empty_like(g)
    bound[:, :k] = a[:, None] + b_c * (ay[:, None] + z[:, :k] ** 2)
    bound[:, k:] = (a + b_c * (ay + tail))[:, None]
    slack = cfg.float_slack * (1.0 + np.abs(g))
    bad = g - bound > slack
    violations = []
    for row, i in np.argwhere(bad)[:10]:
        block = "quadratic" if i < k else "linear"
        _record(
            violations, 10,
            point=dict(t=float(t[row]), s=float(s[row]), y=y[row].tolist(), z=z[row].tolist()),
            component=int(i), inequality=f"mixed_growth_{block}",
            lhs=float(g[row, i]), rhs=float(bound[row, i]),
        )
    n_bad = int(bad.any(axis=-1).sum())
    return AssumptionReport(
        hypothesis="mixed_growth", family=spec.family,
        n_samples=cfg.n_samples, n_violations=n_bad, passed=n_bad == 0,
        violations=violations,
        details=dict(alpha=a_c if not callable(a_c) else "callable", beta=b_c, split=k),
    )


def _check_diag_subquad_convex(spec, cfg, rng):
    a_c, b_c, _, d_c = cfg.constants_for(spec)
    t, s, y, z = _sample_points(spec, cfg, rng)
    a = _alpha_values(a_c, t, s)
    g = spec.evaluate(t, s, y, z)
    violations = []
    n_bad = 0

    # growth |g^i| <= alpha + beta (|y| + |z^i|^(1+delta))
    ay = np.linalg.norm(y, axis=-1)
    bound = a[:, None] + b_c * (ay[:, None] + np.abs(z) ** (1.0 + d_c))
    slack = cfg.float_slack * (1.0 + np.abs(g))
    bad = np.abs(g) - bound > slack
    n_bad += int(bad.any(axis=-1).sum())
    for row, i in np.argwhere(bad)[:5]:
        _record(
            violations, 10,
            point=dict(t=float(t[row]), s=float(s[row]), y=y[row].tolist(), z=z[row].tolist()),
            component=int(i), inequality="subquadratic_growth",
            lhs=float(abs(g[row, i])), rhs=float(bound[row, i]),
        )

    # Lipschitz in y with constant beta
    y2 = rng.uniform(-cfg.box, cfg.box, y.shape)
    g2 = spec.evaluate(t, s, y2, z)
    dy = np.linalg.norm(y - y2, axis=-1)
    bad = np.abs(g - g2) - b_c * dy[:, None] > cfg.float_slack * (1.0 + np.abs(g))
    n_bad += int(bad.any(axis=-1).sum())
    for row, i in np.argwhere(bad)[:5]:
        _record(
            violations, 10,
            point=dict(t=float(t[row]), s=float(s[row]), y=y[row].tolist(), z=z[row].tolist()),
            component=int(i), inequality="y_lipschitz",
            lhs=float(abs(g[row, i] - g2[row, i])), rhs=float(b_c * dy[row]),
        )

    # diagonality: off-component z perturbations leave g^i unchanged
    diag_bad = 0
    if spec.dim > 1:
        z3 = rng.uniform(-cfg.box, cfg.box, z.shape)
        for i in range(spec.dim):
            zi = z3.copy()
            zi[:, i] = z[:, i]
            gi = spec.evaluate(t, s, y, zi)
            bad = np.abs(gi[:, i] - g[:, i]) > cfg.float_slack * (1.0 + np.abs(g[:, i]))
            diag_bad += int(bad.sum())
            for row in np.argwhere(bad)[:2]:
                _record(
                    violations, 10,
                    point=dict(t=float(t[row[0]]), s=float(s[row[0]])),
                    component=i, inequality="diagonal_in_z",
                    lhs=float(abs(gi[row[0], i] - g[row[0], i])), rhs=0.0,
                )
        n_bad += diag_bad

    # segment inequality in the own component:
    # g(., (1-th) z + th zb) - th g(., zb) <= (1-th) [alpha + beta (|y| + |z|^(1+delta))]
    zb = rng.uniform(-cfg.box, cfg.box, z.shape)
    gb = spec.evaluate(t, s, y, zb)
    seg_bad = 0
    for theta in np.linspace(0.0, 1.0, cfg.n_theta + 2)[1:-1]:
        zm = (1.0 - theta) * z + theta * zb
        gm = spec.evaluate(t, s, y, zm)
        rhs = (1.0 - theta) * (a[:, None] + b_c * (ay[:, None] + np.abs(z) ** (1.0 + d_c)))
        lhs = gm - theta * gb
        bad = lhs - rhs > cfg.float_slack * (1.0 + np.abs(lhs))
        seg_bad += int(bad.any(axis=-1).sum())
        for row, i in np.argwhere(bad)[:2]:
            _record(
                violations, 10,
                point=dict(theta=float(theta), z=z[row].tolist(), zb=zb[row].tolist()),
                component=int(i), inequality="segment_convexity",
                lhs=float(lhs[row, i]), rhs=float(rhs[row, i]),
            )
    n_bad += seg_bad

    return AssumptionReport(
        hypothesis="diagonal_subquadratic_convex", family=spec.family,
        n_samples=cfg.n_samples, n_violations=n_bad, passed=n_bad == 0,
        violations=violations,
        details=dict(
            alpha=a_c if not callable(a_c) else "callable", beta=b_c, delta=d_c,
            segment_violations=seg_bad, diagonality_violations=diag_bad,
        ),
    )


def _check_superquadratic(spec, cfg, rng):
    """Zero at z = 0 (with y = 0) plus an increasing g/|z|^2 ratio ladder.

    The limit g/|z|^2 -> infinity is certified on samples by the fitted
    log-log slope of the ratio against |z| being > 0.05 on a geometric ladder
    reaching 100x the sample box; sub- and exactly-quadratic drivers give
    slopes <= 0, clearly separated.
    """
    n = spec.dim
    t = 0.0
    s = cfg.horizon
    y0 = np.zeros((1, n))
    g0 = spec.evaluate(t, s, y0, np.zeros((1, n)))
    zero_ok = bool(np.all(np.abs(g0) <= 1e-300))
    radii = np.geomspace(1.0, 100.0 * cfg.box, 25)
    slopes = []
    for i in range(n):
        z = np.zeros((radii.size, n))
        z[:, i] = radii
        gi = spec.evaluate(t, s, np.zeros_like(z), z)[:, i]
        ratio = np.abs(gi) / radii**2
        if np.any(ratio <= 0):
            slopes.append(-np.inf)
            continue
        slope = np.polyfit(np.log(radii), np.log(ratio), 1)[0]
        slopes.append(float(slope))
    min_slope = float(min(slopes))
    passed = zero_ok and min_slope > 0.05
    violations = []
    if not zero_ok:
        violations.append(dict(inequality="zero_at_origin", lhs=float(np.max(np.abs(g0))), rhs=0.0))
    if not min_slope > 0.05:
        worst = int(np.argmin(slopes))
        violations.append(
            dict(inequality="ratio_divergence", component=worst,
                 lhs=min_slope, rhs=0.05,
                 point=dict(radius_max=float(radii[-1])))
        )
    return AssumptionReport(
        hypothesis="superquadratic_growth", family=spec.family,
        n_samples=radii.size * n + 1, n_violations=len(violations),
        passed=passed, violations=violations,
        details=dict(ratio_slopes=slopes, zero_at_origin=zero_ok),
    )


def catalog_list() -> list[dict]:
    """Stable-ordered descriptors of the built-in driver families and free
    terms, with default parameters and structure flags."""
    out = []
    defaults = {
        "linear": GeneratorSpec("linear", coef_y=-1.0),
        "entropic_diag": GeneratorSpec("entropic_diag", gamma=1.0),
        "subquad_diag": GeneratorSpec("subquad_diag", gamma=1.0, kappa=2.0, delta=0.5),
        "diag_strict_quad_example": GeneratorSpec(
            "diag_strict_quad_example", delta=0.5, alpha=8.0, beta=4.0, gamma=0.5
        ),
        "mixed_lin_quad": GeneratorSpec("mixed_lin_quad", dim=2, split=1, gamma=1.0, beta=1.0),
        "superquad": GeneratorSpec("superquad", p=3.0, gamma=1.0),
    }
    for fam in GENERATOR_FAMILIES:
        if fam == "user_table":
            out.append({"id": f"generator/{fam}", "family": fam,
                        "note": "library-level callback; declare structure flags"})
            continue
        out.append({"id": f"generator/{fam}", **defaults[fam].descriptor()})
    for fn in FREE_TERM_FUNCTIONALS:
        out.append({"id": f"free_term/{fn}", "functional": fn,
                    "kinds": ["terminal", "process"], "time_profiles": list(TIME_PROFILES)})
    return out
