"""Command-line front end.

Five subcommands over JSON config files:

* ``fit``       one estimator run at a single sample size
* ``rates``     n-grid sweep with log-log slope fits
* ``variance``  averaged-iterate error against the Cramer-Rao trace
* ``constants`` curvature / spectral / derivative-norm sweeps for a model
* ``bounds``    closed-form online and offline bound values

Exit codes: 0 on success, 2 on an invalid config or argument, 3 when
``--strict`` was given and a certified condition fails (for example a
nonpositive effective convexity).  The config schemas are documented in
the README; ``fit``, ``rates``, and ``variance`` share the experiment
schema, while ``constants`` and ``bounds`` take the reduced shapes shown
there.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .bounds import (
    BoundConstants,
    logz_norms,
    offline_bound,
    offline_noise_scale,
    offline_transients,
    online_bound_terms,
)
from .errors import CdfamError, ConditionViolatedError, InvalidInputError
from .expfam import ParamDomain, theory_constants
from .harness import (
    ExperimentConfig,
    model_from_dict,
    model_to_dict,
    run_experiment,
)
from .kernels import alpha_sup, make_kernel


def _add_common_flags(sub):
    sub.add_argument("--config", required=True, help="JSON config file")
    sub.add_argument("--seed", type=int, default=None, help="override the root seed")
    sub.add_argument("--workers", type=int, default=1, help="replication-block processes")
    sub.add_argument("--out-dir", default=None, help="directory for report files")
    sub.add_argument("--svg", dest="svg", action="store_true", default=None,
                     help="also write the log-log plot")
    sub.add_argument("--no-svg", dest="svg", action="store_false",
                     help="suppress the plot even if the config asks for it")
    sub.add_argument("--strict", action="store_true",
                     help="exit 3 when a bound hypothesis fails instead of warning")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdfam",
        description="contrastive divergence estimation experiments and bound evaluation",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("fit", "run the configured estimators at one sample size"),
        ("rates", "sweep the n-grid and fit convergence slopes"),
        ("variance", "compare averaged error to the Cramer-Rao trace"),
        ("constants", "sweep theory constants for a model and domain"),
        ("bounds", "evaluate the closed-form convergence bounds"),
    ):
        _add_common_flags(subs.add_parser(name, help=text))
    return parser


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as err:
        raise InvalidInputError(f"cannot read config: {err}") from None
    except json.JSONDecodeError as err:
        raise InvalidInputError(f"config is not valid JSON: {err}") from None


def _experiment_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_dict(_load_json(args.config))
    updates = {}
    if args.seed is not None:
        updates["root_seed"] = args.seed
    if args.out_dir is not None:
        updates["out_dir"] = args.out_dir
    if args.svg is not None:
        updates["svg"] = args.svg
    if updates:
        config = dataclasses.replace(config, **updates)
    return config


def _print_rows(report, stats, out):
    for r in report.rows:
        if r.stat in stats:
            print(
                f"{r.estimator:>16s}  n={r.n:<7d} {r.stat} = {r.value:.6g}"
                f" +- {r.stderr:.3g}  ({r.replications} reps)",
                file=out,
            )


def _run_command(args, out) -> int:
    config = _experiment_config(args)
    if args.command == "fit" and len(config.n_grid) != 1:
        raise InvalidInputError(
            f"fit runs a single sample size; the config has n_grid {config.n_grid}"
        )
    if args.command == "rates" and len(config.n_grid) < 3:
        raise InvalidInputError("rates needs at least 3 grid sizes for a slope fit")
    if args.strict and config.bound_constants is not None:
        # check the hypotheses at the chain lengths the report will use
        for spec in config.estimators:
            for n in config.n_grid:
                m = spec.resolve_m(n)
                dataclasses.replace(config.bound_constants, m=m).require_dissipative()
    report = run_experiment(config, workers=args.workers)
    if args.command == "variance":
        _print_rows(report, ("mse_avg", "variance_ratio"), out)
        print(f"tr(inverse Fisher) = {report.trace_inv_fisher:.6g}", file=out)
    else:
        _print_rows(report, ("mse_last", "mse_avg"), out)
    if args.command == "rates":
        for f in report.fits:
            print(
                f"{f.estimator:>16s}  {f.stat} slope = {f.slope:.4f}"
                f" +- {f.slope_stderr:.4f}  (intercept {f.intercept:.4f})",
                file=out,
            )
    for note in report.notes:
        print(f"note: {note}", file=out)
    return 0


def _constants_command(args, out) -> int:
    raw = _load_json(args.config)
    try:
        model = model_from_dict(raw["model"])
        dom = raw["domain"]
        domain = ParamDomain(np.asarray(dom["center"], dtype=float), float(dom["radius"]))
        psi_star = np.asarray(raw["psi_star"], dtype=float)
    except KeyError as missing:
        raise InvalidInputError(f"constants config is missing field {missing}") from None
    opts = raw.get("constants", {})
    kernel = make_kernel(model, raw.get("kernel_kind", "gibbs"))
    theory = theory_constants(
        model, domain, psi_star, grid_resolution=int(opts.get("grid_resolution", 9))
    )
    mode = opts.get("alpha_mode")
    if mode is None:
        mode = "exact" if model.exactness == "enumerable" else "mc"
    steps = int(opts.get("alpha_steps", 1))
    rng = np.random.default_rng(
        args.seed if args.seed is not None else int(raw.get("root_seed", 0))
    )
    sup = alpha_sup(
        kernel,
        domain,
        int(opts.get("alpha_grid_resolution", 5)),
        steps=steps,
        mode=mode,
        n_outer=int(opts.get("alpha_outer", 10_000)),
        rng=rng,
    )
    norms = logz_norms(
        model, domain, int(opts.get("norms_grid_resolution", 9))
    )
    result = {
        "schema_version": "1",
        "model": model_to_dict(model),
        "domain": {"center": [float(v) for v in domain.center], "radius": domain.radius},
        "theory": {"mu": theory.mu, "L": theory.L, "sigma": theory.sigma, "chi": theory.chi},
        "alpha": {
            "value": sup.alpha,
            "f_label": sup.f_label,
            "psi": [float(v) for v in sup.psi],
            "stderr": sup.stderr,
            "mode": mode,
            "steps": steps,
        },
        "logz_norms": {
            "norm_1": norms.norm_1, "norm_2": norms.norm_2, "norm_3": norms.norm_3
        },
    }
    if "m" in opts:
        constants = BoundConstants(
            mu=theory.mu, L=theory.L, sigma=theory.sigma, chi=theory.chi,
            alpha=sup.alpha, m=int(opts["m"]), norm_3=norms.norm_3,
        )
        if args.strict:
            constants.require_dissipative()
        derived = {
            "m": constants.m,
            "mu_tilde": constants.mu_tilde,
            "L_tilde": constants.L_tilde,
            "sigma_tilde_sq": constants.sigma_tilde_sq,
        }
        try:
            derived["min_chain_length"] = constants.min_chain_length()
        except ConditionViolatedError as err:
            derived["min_chain_length"] = None
            result["condition_violated"] = str(err)
        result["derived"] = derived
    print(f"mu = {theory.mu:.6g}  L = {theory.L:.6g}  sigma = {theory.sigma:.6g}"
          f"  chi = {theory.chi:.6g}", file=out)
    se = "" if sup.stderr is None else f" +- {sup.stderr:.3g}"
    print(f"alpha = {sup.alpha:.6g}{se}  (worst statistic {sup.f_label}, {mode} mode)",
          file=out)
    print(f"logZ norms: {norms.norm_1:.6g}, {norms.norm_2:.6g}, {norms.norm_3:.6g}",
          file=out)
    if "derived" in result:
        d = result["derived"]
        print(f"m = {d['m']}: mu_tilde = {d['mu_tilde']:.6g}  L_tilde = {d['L_tilde']:.6g}"
              f"  sigma_tilde_sq = {d['sigma_tilde_sq']:.6g}", file=out)
    if args.out_dir is not None:
        os.makedirs(args.out_dir, exist_ok=True)
        path = os.path.join(args.out_dir, "constants.json")
        with open(path, "w") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {path}", file=out)
    return 0


def _as_n_list(value):
    ns = value if isinstance(value, list) else [value]
    return [int(n) for n in ns]


def _bounds_command(args, out) -> int:
    raw = _load_json(args.config)
    if "constants" not in raw:
        raise InvalidInputError('bounds config needs a "constants" object')
    constants = BoundConstants(**raw["constants"])
    if "online" not in raw and "offline" not in raw:
        raise InvalidInputError('bounds config needs an "online" or "offline" section')
    result = {
        "schema_version": "1",
        "constants": {
            "mu": constants.mu, "L": constants.L, "sigma": constants.sigma,
            "chi": constants.chi, "alpha": constants.alpha, "m": constants.m,
            "norm_3": constants.norm_3, "mu_tilde": constants.mu_tilde,
            "L_tilde": constants.L_tilde, "sigma_tilde_sq": constants.sigma_tilde_sq,
        },
    }
    violated = None
    try:
        if "online" in raw:
            o = raw["online"]
            entries = []
            for n in _as_n_list(o["n"]):
                tr, st = online_bound_terms(
                    constants, float(o["delta0"]), n, float(o["C"]), float(o["beta"])
                )
                entries.append({"n": n, "transient": tr, "stationary": st, "total": tr + st})
                print(f"online  n={n:<8d} bound = {tr + st:.6g}"
                      f"  (transient {tr:.3g}, stationary {st:.3g})", file=out)
            result["online"] = entries
        if "offline" in raw:
            o = raw["offline"]
            entries = []
            if "sigma_offline" in o:
                sigma_off = float(o["sigma_offline"])
            else:
                sigma_off = offline_noise_scale(
                    float(o.get("epsilon", 0.0)), constants.sigma,
                    float(o["kappa"]), int(o["B"]),
                )
            for n in _as_n_list(o["n"]):
                B = int(o.get("B", n))
                value = offline_bound(
                    constants, float(o["delta00"]), sigma_off, n, B,
                    int(o["T"]), float(o["C"]), float(o["beta"]),
                )
                e1, e2 = offline_transients(
                    constants.mu_tilde, constants.L, float(o["C"]), float(o["beta"]),
                    int(o["T"]), -(-n // B),
                )
                entries.append({
                    "n": n, "B": B, "root_bound": value,
                    "transient_1": e1, "transient_2": e2,
                    "sigma_offline": sigma_off,
                })
                print(f"offline n={n:<8d} root bound = {value:.6g}"
                      f"  (E1 {e1:.3g}, E2 {e2:.3g})", file=out)
            result["offline"] = entries
    except ConditionViolatedError as err:
        if args.strict:
            raise
        violated = str(err)
        print(f"condition violated: {violated}", file=out)
        result["condition_violated"] = violated
    except KeyError as missing:
        raise InvalidInputError(f"bounds config is missing field {missing}") from None
    if args.out_dir is not None:
        os.makedirs(args.out_dir, exist_ok=True)
        path = os.path.join(args.out_dir, "bounds.json")
        with open(path, "w") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {path}", file=out)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = sys.stdout
    try:
        if args.command in ("fit", "rates", "variance"):
            return _run_command(args, out)
        if args.command == "constants":
            return _constants_command(args, out)
        return _bounds_command(args, out)
    except ConditionViolatedError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except (InvalidInputError, TypeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except CdfamError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
