"""Command-line runner.

    bsvie <command> --config <path> [--out <dir>] [--seed <n>] [--threads <k>]

Commands: solve-bsde, solve-bsvie, risk, verify, sweep, demo-superquad.

Exit codes: 0 on success (including reported non-convergence of the outer
Volterra iteration and caught blow-ups inside demo-superquad), 2 on
configuration or usage errors, 3 when an inner fixed point or regression
fails to converge, 4 on numeric blow-up outside the demo. Every run writes a
manifest JSON recording the config hash, effective seed, package version,
wall time, and the list of produced files. CSV payloads are deterministic
functions of the config, so reruns are byte-identical; manifests carry
timings and are not.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from importlib import metadata as _metadata
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .diagnostics import (
    bmo_estimate,
    exp_moment_bound_check,
    exp_moment_bound_crosscheck,
    subadditivity_check,
    superquad_demo,
)
from .errors import (
    ConfigurationError,
    EvaluationDomainError,
    InnerIterationError,
    NumericBlowupError,
    OuterIndexError,
    RegularizationNeededError,
)
from .mc_solver import solve_bsde_mc
from .problems import HYPOTHESIS_IDS, SampleConfig, check_assumptions
from .reporting import (
    figure_bound_profile,
    figure_bsde,
    figure_bsvie,
    figure_diagnostics,
    figure_risk,
    figure_superquad,
    figure_sweep,
    write_csv,
)
from .risk import (
    axiom_suite,
    entropic_risk,
    entropic_risk_mc,
    entropic_risk_via_bsde,
    extended_risk_bsde,
    naive_odd_power_risk,
    equilibrium_risk_bsvie,
)
from .tree_solver import entropic_reference, solve_bsde_tree
from .volterra import check_bsde_reduction, solve_bsvie

__all__ = ["main", "build_parser"]

_DIAG_FIELDS = ["check_id", "instance_id", "lhs", "rhs_core", "K_hat", "verdict"]


def _version() -> str:
    try:
        return _metadata.version("bsvie")
    except _metadata.PackageNotFoundError:
        return "0.0.0+local"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bsvie",
        description="Backward stochastic equation solvers: plain, Volterra, risk, diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("solve-bsde", "solve a plain backward equation and report Y/Z statistics"),
        ("solve-bsvie", "solve a Volterra backward equation via outer iteration"),
        ("risk", "evaluate a dynamic risk curve for a position"),
        ("verify", "run structural and a-priori-estimate checks"),
        ("sweep", "refinement study of the tree solver against the closed form"),
        ("demo-superquad", "stress run of a super-quadratic driver across refinements"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the run config JSON")
        p.add_argument("--out", default="bsvie_out", help="output directory (created)")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument(
            "--threads", type=int, default=None,
            help="worker hint, recorded in the manifest (runs are single-process)",
        )
    return parser


# ---------------------------------------------------------------------------
# command implementations: each returns (outputs, extra) for the manifest


def _png(cfg) -> bool:
    return "png" in cfg.output_formats


def _csv(cfg) -> bool:
    return "csv" in cfg.output_formats


def _require_terminal(cfg):
    ft = cfg.require("problem")["free_term"]
    if ft.get("kind", "terminal") != "terminal":
        raise ConfigurationError(
            "this command needs a terminal free term", path="problem.free_term.kind"
        )


def cmd_solve_bsde(cfg: RunConfig, outdir: Path):
    _require_terminal(cfg)
    problem = cfg.problem()
    gen = problem.generator
    outputs, extra = [], {}
    rows = []
    if cfg.backend == "tree":
        tree = cfg.tree()
        term = problem.free_term.base_values(tree.terminal_nodes)
        sol = solve_bsde_tree(tree, gen, term, cfg.tree_config())
        stats = {"y": sol.level_stats("y"), "z": sol.level_stats("z")}
        for what in ("y", "z"):
            st = stats[what]
            for t, comp, mean, lo, hi in zip(
                st["t"], st["component"], st["mean"], st["min"], st["max"]
            ):
                rows.append({"t": t, "component": comp, "stat": f"{what}_mean", "value": mean})
                rows.append({"t": t, "component": comp, "stat": f"{what}_min", "value": lo})
                rows.append({"t": t, "component": comp, "stat": f"{what}_max", "value": hi})
        extra["root_value"] = [float(v) for v in sol.root_value()]
        per_comp = {}
        st = stats["y"]
        for i in range(sol.dim):
            sel = [j for j, c in enumerate(st["component"]) if c == i]
            per_comp[i] = {k: [st[k][j] for j in sel] for k in ("t", "mean", "min", "max")}
    else:
        ens = cfg.ensemble()
        term = problem.free_term.base_values(ens.terminal)
        sol = solve_bsde_mc(ens, gen, term, cfg.basis_spec(), cfg.mc_config())
        times = ens.grid.times
        per_comp = {}
        for i in range(sol.dim):
            mean = sol.y[:, :, i].mean(axis=0)
            lo = sol.y[:, :, i].min(axis=0)
            hi = sol.y[:, :, i].max(axis=0)
            per_comp[i] = {"t": times.tolist(), "mean": mean.tolist(),
                           "min": lo.tolist(), "max": hi.tolist()}
            for k, t in enumerate(times):
                rows.append({"t": t, "component": i, "stat": "y_mean", "value": mean[k]})
                rows.append({"t": t, "component": i, "stat": "y_min", "value": lo[k]})
                rows.append({"t": t, "component": i, "stat": "y_max", "value": hi[k]})
            for k in range(ens.grid.steps):
                zc = sol.z[:, k, i]
                rows.append({"t": times[k], "component": i, "stat": "z_mean", "value": zc.mean()})
                rows.append({"t": times[k], "component": i, "stat": "z_min", "value": zc.min()})
                rows.append({"t": times[k], "component": i, "stat": "z_max", "value": zc.max()})
        extra["root_value"] = [float(v) for v in sol.root_mean()]
        extra["max_condition_number"] = float(np.max(sol.step_diagnostics["cond"]))
    if _csv(cfg):
        outputs.append(write_csv(outdir / f"{cfg.output_prefix}_bsde.csv",
                                 ["t", "component", "stat", "value"], rows))
    if _png(cfg):
        outputs.append(figure_bsde(outdir / f"{cfg.output_prefix}_bsde_y.png", per_comp))
    return outputs, extra


def cmd_solve_bsvie(cfg: RunConfig, outdir: Path):
    problem = cfg.problem()
    outputs, extra = [], {}
    if cfg.backend == "tree":
        sol, report = solve_bsvie(
            problem, "tree", tree=cfg.tree(),
            tree_config=cfg.tree_config(), picard=cfg.picard_config(),
        )
    else:
        sol, report = solve_bsvie(
            problem, "mc", ensemble=cfg.ensemble(),
            mc_config=cfg.mc_config(), basis=cfg.basis_spec(), picard=cfg.picard_config(),
        )
    summary = sol.diagonal_summary()
    rows = []
    for k, t in enumerate(sol.times):
        for i in range(sol.dim):
            rows.append({"t": t, "component": i, "Y": summary[k, i],
                         "picard_iters": report.iterations})
    extra.update({"verdict": report.verdict, "iterations": report.iterations,
                  "deltas": [float(d) for d in report.deltas], "eps_outer": report.eps_outer})
    if _csv(cfg):
        outputs.append(write_csv(outdir / f"{cfg.output_prefix}_bsvie_diagonal.csv",
                                 ["t", "component", "Y", "picard_iters"], rows))
    if _png(cfg):
        outputs.append(figure_bsvie(outdir / f"{cfg.output_prefix}_bsvie.png",
                                    sol.times, summary, report.deltas))
    return outputs, extra


def _risk_position(cfg: RunConfig):
    r = cfg.require("risk")
    if "position" in r:
        return cfg.free_term_spec(r["position"], path="risk.position")
    if "problem" in cfg.raw:
        return cfg.free_term_spec()
    raise ConfigurationError("risk needs a position (or a problem section)", path="risk.position")


def cmd_risk(cfg: RunConfig, outdir: Path):
    r = cfg.require("risk")
    method = r["method"]
    gamma = float(r.get("gamma", 1.0))
    alpha = float(r.get("alpha", 1.0))
    kappa = float(r.get("kappa", 2.0))
    position = _risk_position(cfg)
    outputs, extra = [], {}
    rows = []
    tree = cfg.tree()

    if method == "equilibrium_bsvie":
        gen = cfg.generator_spec()
        try:
            curve, report = equilibrium_risk_bsvie(
                tree, position, gen, tree_config=cfg.tree_config(), picard=cfg.picard_config()
            )
        except ValueError as exc:
            raise ConfigurationError(str(exc), path="risk") from exc
        extra.update({"verdict": report.verdict, "iterations": report.iterations})
    elif method == "closed_form" and cfg.backend == "mc":
        if position.kind != "terminal":
            raise ConfigurationError("mc risk needs a terminal position", path="risk.position")
        curve = entropic_risk_mc(cfg.ensemble(), position, gamma, cfg.basis_spec())
    else:
        if cfg.backend == "mc":
            raise ConfigurationError(
                f"method {method!r} runs on the tree backend", path="run.backend"
            )
        if position.kind != "terminal":
            raise ConfigurationError(
                "terminal-position methods need kind=terminal (use equilibrium_bsvie "
                "for position flows)", path="risk.position",
            )
        if method == "closed_form":
            curve = entropic_risk(tree, position, gamma)
        elif method == "bsde":
            curve = entropic_risk_via_bsde(tree, position, gamma, cfg.tree_config())
        elif method == "extended_bsde":
            res = extended_risk_bsde(tree, position, gamma, alpha, kappa, cfg.tree_config())
            curve = res.curve
            extra.update({"k_hat": res.k_hat, "z_convention": res.z_convention})
            rows.append({"t": 0.0, "kind": "k_hat", "value": res.k_hat, "method": method})
        else:
            curve = naive_odd_power_risk(tree, position, gamma, alpha)

    summary = curve.summary()
    for k in range(len(summary["t"])):
        for kind in ("mean", "min", "max"):
            rows.append({"t": summary["t"][k], "kind": kind,
                         "value": summary[kind][k], "method": curve.method})
    extra["value_at_root"] = curve.value_at_root()
    if _csv(cfg):
        outputs.append(write_csv(outdir / f"{cfg.output_prefix}_risk.csv",
                                 ["t", "kind", "value", "method"], rows))
    if _png(cfg):
        outputs.append(figure_risk(outdir / f"{cfg.output_prefix}_risk.png",
                                   summary["t"], {curve.method: summary["mean"]}))
    return outputs, extra


def _default_bound_constants(gen):
    """Family-aware defaults for the growth gate of the moment bound."""
    if gen.family == "entropic_diag":
        return 0.0, 0.5 * gen.gamma, 1.0
    if gen.family == "subquad_diag":
        return 0.0, gen.gamma / gen.kappa, gen.delta
    if gen.family == "linear":
        return abs(gen.coef_z), abs(gen.coef_z), 1.0
    d = gen.delta if 0 < gen.delta <= 1 else 1.0
    return 0.0, max(gen.beta, 1.0), d


def cmd_verify(cfg: RunConfig, outdir: Path):
    v = cfg._section("verify")
    checks = v.get("checks", ["assumptions"])
    outputs, extra = [], {}
    rows = []
    bound = None
    tree = cfg.tree()

    if "assumptions" in checks:
        gen = cfg.generator_spec()
        # envelope constants: config overrides, else the family-aware defaults
        # shared with the moment-bound gate (a driver's own alpha/beta/delta
        # fields are formula parameters, not growth constants, for most
        # families)
        a0_d, beta_d, delta_d = _default_bound_constants(gen)
        sample = SampleConfig(
            alpha=v.get("alpha0", a0_d),
            beta=v.get("beta", beta_d),
            delta=v.get("delta", delta_d),
        )
        for hyp in v.get("hypotheses", list(HYPOTHESIS_IDS)):
            rep = check_assumptions(gen, hyp, sample)
            rows.append({
                "check_id": f"assumptions/{hyp}", "instance_id": gen.family,
                "lhs": float(rep.n_violations), "rhs_core": 0.0, "K_hat": np.nan,
                "verdict": "pass" if rep.passed else "fail",
            })

    if "exp_moment_bound" in checks:
        _require_terminal(cfg)
        problem = cfg.problem()
        gen = problem.generator
        a0_d, beta_d, delta_d = _default_bound_constants(gen)
        alpha0 = v.get("alpha0", a0_d)
        beta = v.get("beta", beta_d)
        delta = v.get("delta", delta_d)
        term = problem.free_term.base_values(tree.terminal_nodes)
        sol = solve_bsde_tree(tree, gen, term, cfg.tree_config())
        try:
            bound = exp_moment_bound_check(
                tree, sol, gen, term, alpha0, beta, delta,
                one_sided=v.get("one_sided", False), instance_id=gen.family,
            )
        except ValueError as exc:
            rows.append({"check_id": "exp_moment_bound", "instance_id": gen.family,
                         "lhs": np.nan, "rhs_core": np.nan, "K_hat": np.nan,
                         "verdict": f"refused: {exc}"})
        else:
            rows.extend(bound.rows())
            extra["exp_moment_bound"] = {"k_hat": bound.k_hat, "verdict": bound.verdict}
            if v.get("crosscheck", False) and np.isfinite(bound.k_hat):
                diff = exp_moment_bound_crosscheck(
                    tree, sol, term, alpha0, delta, bound.k_hat,
                    one_sided=v.get("one_sided", False),
                )
                rows.append({"check_id": "exp_moment_bound/crosscheck",
                             "instance_id": gen.family, "lhs": diff, "rhs_core": 1e-12,
                             "K_hat": bound.k_hat,
                             "verdict": "pass" if diff <= 1e-12 else "fail"})
                extra["crosscheck_max_rel_diff"] = diff

    if "bmo" in checks:
        _require_terminal(cfg)
        problem = cfg.problem()
        term = problem.free_term.base_values(tree.terminal_nodes)
        sol = solve_bsde_tree(tree, problem.generator, term, cfg.tree_config())
        est = bmo_estimate(tree, sol.z_levels)
        rows.append({"check_id": "bmo_estimate", "instance_id": problem.generator.family,
                     "lhs": est.value, "rhs_core": est.norm, "K_hat": np.nan,
                     "verdict": "reported"})
        extra["bmo"] = {"value": est.value, "norm": est.norm}

    if "reduction" in checks:
        problem = cfg.problem()
        try:
            if cfg.backend == "tree":
                res = check_bsde_reduction(problem, "tree", tree=tree)
            else:
                res = check_bsde_reduction(
                    problem, "mc", ensemble=cfg.ensemble(), basis=cfg.basis_spec()
                )
        except ValueError as exc:
            rows.append({"check_id": "reduction", "instance_id": problem.generator.family,
                         "lhs": np.nan, "rhs_core": np.nan, "K_hat": np.nan,
                         "verdict": f"refused: {exc}"})
        else:
            rows.append({"check_id": "reduction", "instance_id": problem.generator.family,
                         "lhs": res["discrepancy"], "rhs_core": 0.0, "K_hat": np.nan,
                         "verdict": res["picard"].verdict})
            extra["reduction_discrepancy"] = res["discrepancy"]

    if "axioms" in checks:
        r = cfg._section("risk")
        suite = axiom_suite(
            tree, gamma=float(r.get("gamma", 1.0)), alpha=float(r.get("alpha", 0.5)),
            kappa=float(r.get("kappa", 2.0)),
        )
        for c in suite.checks:
            rows.append({"check_id": f"axioms/{c.axiom}", "instance_id": f"{c.method}: {c.detail}",
                         "lhs": c.residual, "rhs_core": c.tolerance, "K_hat": np.nan,
                         "verdict": "pass" if c.passed else "fail"})
        extra["axioms_passed"] = suite.passed

    if "subadditivity" in checks:
        res = subadditivity_check()
        rows.append({"check_id": "subadditivity", "instance_id": f"samples={res['samples']}",
                     "lhs": float(res["violations"]), "rhs_core": 0.0, "K_hat": np.nan,
                     "verdict": "pass" if res["passed"] else "fail"})

    if _csv(cfg):
        outputs.append(write_csv(outdir / f"{cfg.output_prefix}_diagnostics.csv",
                                 _DIAG_FIELDS, rows))
    if _png(cfg):
        if bound is not None and np.isfinite(bound.k_hat):
            outputs.append(figure_bound_profile(
                outdir / f"{cfg.output_prefix}_diagnostics.png",
                tree.grid.times, bound.per_time_lhs, bound.per_time_rhs, bound.k_hat,
            ))
        elif rows:
            outputs.append(figure_diagnostics(
                outdir / f"{cfg.output_prefix}_diagnostics.png", rows))
    extra["n_checks"] = len(rows)
    return outputs, extra


def cmd_sweep(cfg: RunConfig, outdir: Path):
    ladder = cfg.require("sweep")["steps_ladder"]
    problem = cfg.problem()
    gen = problem.generator
    if gen.family != "entropic_diag" or gen.coef_y != 0.0:
        raise ConfigurationError(
            "the refinement study compares against the closed form, which needs "
            "an entropic_diag driver with coef_y = 0", path="problem.generator",
        )
    if gen.dim != 1:
        raise ConfigurationError("the refinement study is scalar", path="problem.generator.dim")
    _require_terminal(cfg)
    from .grids import build_tree, make_grid

    rows, hs, gaps = [], [], []
    for N in ladder:
        tree = build_tree(make_grid(cfg.horizon, int(N)))
        term = problem.free_term.base_values(tree.terminal_nodes)
        sol = solve_bsde_tree(tree, gen, term, cfg.tree_config())
        value = float(sol.root_value()[0])
        ref = float(entropic_reference(tree, -term[:, 0], gen.gamma)[0][0])
        gap = abs(value - ref)
        rows.append({"steps": int(N), "h": tree.grid.h, "value": value,
                     "reference": ref, "abs_error": gap})
        hs.append(tree.grid.h)
        gaps.append(gap)
    order = np.nan
    if all(g > 0 for g in gaps):
        order = float(np.polyfit(np.log(hs), np.log(gaps), 1)[0])
    extra = {"fitted_order": order, "steps_ladder": [int(N) for N in ladder]}
    outputs = []
    if _csv(cfg):
        outputs.append(write_csv(outdir / f"{cfg.output_prefix}_sweep.csv",
                                 ["steps", "h", "value", "reference", "abs_error"], rows))
    if _png(cfg):
        outputs.append(figure_sweep(outdir / f"{cfg.output_prefix}_sweep.png",
                                    hs, gaps, order if np.isfinite(order) else 1.0))
    return outputs, extra


def cmd_demo_superquad(cfg: RunConfig, outdir: Path):
    d = cfg._section("demo")
    report = superquad_demo(
        p=float(d.get("p", 3.0)),
        terminal_scale=float(d.get("terminal_scale", 8.0)),
        ladder=d.get("steps_ladder", [8, 16, 32, 64]),
        horizon=cfg.horizon,
        scale=float(d.get("scale", 1.0)),
        growth_threshold=float(d.get("growth_threshold", 2.0)),
    )
    extra = {"verdict": report.verdict, "failures": report.failures}
    outputs = []
    if _csv(cfg):
        outputs.append(write_csv(outdir / f"{cfg.output_prefix}_diagnostics.csv",
                                 _DIAG_FIELDS, report.rows()))
    if _png(cfg):
        outputs.append(figure_superquad(outdir / f"{cfg.output_prefix}_superquad.png", report))
    return outputs, extra


_COMMANDS = {
    "solve-bsde": cmd_solve_bsde,
    "solve-bsvie": cmd_solve_bsvie,
    "risk": cmd_risk,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "demo-superquad": cmd_demo_superquad,
}


def _exit_code_for(exc: Exception) -> int:
    if isinstance(exc, OuterIndexError):
        return _exit_code_for(exc.cause)
    if isinstance(exc, ConfigurationError):
        return 2
    if isinstance(exc, (InnerIterationError, RegularizationNeededError)):
        return 3
    if isinstance(exc, (NumericBlowupError, EvaluationDomainError)):
        return 4
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = load_config(args.config).with_overrides(seed=args.seed)
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        outputs, extra = _COMMANDS[args.command](cfg, outdir)
    except (ConfigurationError, InnerIterationError, RegularizationNeededError,
            NumericBlowupError, EvaluationDomainError, OuterIndexError) as exc:
        code = _exit_code_for(exc)
        print(f"bsvie: error: {exc}", file=sys.stderr)
        return code
    manifest = {
        "command": args.command,
        "label": cfg.label,
        "config_path": str(args.config),
        "config_sha256": cfg.sha256(),
        "seed": cfg.seed,
        "backend": cfg.backend,
        "package_version": _version(),
        "threads": args.threads,
        "wall_seconds": time.perf_counter() - started,
        "outputs": [str(p) for p in outputs],
        "extra": extra,
    }
    mpath = outdir / f"{cfg.output_prefix}_manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"bsvie: {args.command} ok: {len(outputs)} artifact(s), manifest {mpath}")
    for p in outputs:
        print(f"  {p}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
