"""Configuration-driven experiment runner.

``ries run config.json`` validates the config, dispatches to the named
experiment, writes a JSON summary (and CSV series where a time series is
produced) into the output directory, and encodes the outcome in the exit
status:

- 0: run completed and every enabled theorem check passed,
- 1: run completed but a theorem check failed (report still written),
- 2: config schema violation or parse error,
- 3: a dense-algebra capacity guard tripped.

``ries validate config.json`` prints the fully-resolved config (defaults
applied) and exits 0/2. Identical configs and seeds give byte-identical
summaries except for the wall-time field.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .ensemble import (
    EnsembleError,
    RrdoEnsemble,
    decay_estimator,
    ensemble_from_json,
    lyapunov,
    mean_rdo,
    simulate_forward,
    simulate_reverse,
    theta_routes,
    trajectory_rng,
)
from .linalg import random_hermitian, vec
from .model import (
    CapacityError,
    ObservableWindow,
    _chain_dims,
    full_chain_oracle,
    model_from_json,
    rdo_from_model,
    system_gns_data,
)
from .rdo import RdoValidationError, classify, ideal_asymptotics, validate as validate_rdo
from .serialize import dump_json, matrix_from_json, write_csv
from .thermo import (
    ergodic_instant_limit,
    ergodic_instant_monte_carlo,
    flux_closed_form,
    flux_monte_carlo,
    identity_family,
    probe_energy_family,
    system_observable_family,
)

EXPERIMENTS = (
    "classify",
    "ideal",
    "ergodic",
    "decay",
    "reverse",
    "lyapunov",
    "instant",
    "fluxes",
    "oracle-check",
)


class ConfigError(Exception):
    """The config file violates the schema."""


# allowed keys and defaults per experiment; None marks "required, no default"
_COMMON = {"experiment": None, "tolerances": {"tol_one": 1e-8, "gap_min": 1e-6}}
_SCHEMAS = {
    "classify": {**_COMMON, "model": None, "matrix": None, "psi_s": None},
    "ideal": {**_COMMON, "model": None, "n_max": 200},
    "ergodic": {
        **_COMMON,
        "ensemble": None,
        "seeds": [0],
        "n_total": 10_000,
        "checkpoint_every": 1000,
        "bound_coefficient": 5.0,
    },
    "decay": {**_COMMON, "ensemble": None, "seeds": [0], "n_total": 2000},
    "reverse": {
        **_COMMON,
        "ensemble": None,
        "seeds": [0],
        "n_total": 500,
        "checkpoint_every": 10,
    },
    "lyapunov": {
        **_COMMON,
        "ensemble": None,
        "seeds": [0],
        "n_total": 5000,
        "reorth_every": 10,
    },
    "instant": {
        **_COMMON,
        "ensemble": None,
        "family": "identity",
        "a_s": None,
        "seeds": [0],
        "n_total": 10_000,
    },
    "fluxes": {
        **_COMMON,
        "ensemble": None,
        "monte_carlo": True,
        "seeds": [0],
        "n_total": 10_000,
        "rho_init": None,
    },
    "oracle-check": {
        **_COMMON,
        "model": None,
        "m_max": 6,
        "n_draws": 5,
        "n_observables": 5,
        "seed": 0,
        "tol": 1e-10,
    },
}
# keys that stay absent (no default) unless the user provides them
_OPTIONAL_NO_DEFAULT = {"model", "matrix", "psi_s", "a_s", "rho_init", "ensemble"}


def validate_config(doc: dict) -> dict:
    """Resolve defaults and reject unknown keys; idempotent on its own output."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    exp = doc.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    schema = _SCHEMAS[exp]
    unknown = set(doc) - set(schema)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    resolved = {}
    for key, default in schema.items():
        if key in doc:
            resolved[key] = doc[key]
        elif key in _OPTIONAL_NO_DEFAULT or default is None:
            continue
        else:
            resolved[key] = default
    if "tolerances" in resolved:
        tdoc = resolved["tolerances"]
        tdef = _COMMON["tolerances"]
        if set(tdoc) - set(tdef):
            raise ConfigError(f"unknown tolerance keys: {sorted(set(tdoc) - set(tdef))}")
        resolved["tolerances"] = {k: float(tdoc.get(k, v)) for k, v in tdef.items()}
    _check_resolved(resolved)
    return resolved


def _check_resolved(cfg: dict) -> None:
    exp = cfg["experiment"]
    if "seeds" in cfg:
        if not isinstance(cfg["seeds"], list) or not cfg["seeds"]:
            raise ConfigError("seeds must be a nonempty list of integers")
        cfg["seeds"] = [int(s) for s in cfg["seeds"]]
    if "n_total" in cfg and int(cfg["n_total"]) < 1:
        raise ConfigError("n_total must be >= 1")
    if exp == "classify" and not (("model" in cfg) ^ ("matrix" in cfg)):
        raise ConfigError("classify needs exactly one of 'model' or 'matrix'")
    if exp == "classify" and "matrix" in cfg and "psi_s" not in cfg:
        raise ConfigError("matrix-form classify needs 'psi_s'")
    if exp in ("ideal", "oracle-check") and "model" not in cfg:
        raise ConfigError(f"{exp} needs a 'model'")
    if "ensemble" in _SCHEMAS[exp] and exp != "classify" and "ensemble" not in cfg:
        raise ConfigError(f"{exp} needs an 'ensemble'")
    if exp == "instant" and cfg["family"] not in ("identity", "system", "probe_energy"):
        raise ConfigError("family must be identity, system or probe_energy")
    if exp == "instant" and cfg["family"] == "system" and "a_s" not in cfg:
        raise ConfigError("family 'system' needs 'a_s'")
    # surface bad probability weights at validation time, not mid-run
    if "ensemble" in cfg and "atoms" in cfg["ensemble"]:
        total = sum(float(a.get("p", np.nan)) for a in cfg["ensemble"]["atoms"])
        if not np.isfinite(total) or abs(total - 1.0) > 1e-12:
            raise ConfigError(f"atom probabilities sum to {total}, expected 1")


def validate_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return validate_config(doc)


def _build_ensemble(cfg: dict) -> RrdoEnsemble:
    return ensemble_from_json(cfg["ensemble"])


def _seed_map(fn, seeds, jobs: int):
    """Apply fn over seeds, optionally in a thread pool; order follows seeds."""
    if jobs <= 1 or len(seeds) <= 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, seeds))


def _run_classify(cfg: dict, out: str, jobs: int) -> tuple[dict, dict]:
    tol = cfg["tolerances"]
    if "model" in cfg:
        system, probe = model_from_json(cfg["model"])
        rdo = rdo_from_model(system, probe)
    else:
        m = matrix_from_json(cfg["matrix"], "matrix")
        psi_s = np.array([complex(z[0], z[1]) for z in cfg["psi_s"]])
        rdo = validate_rdo(m, psi_s)
    report = classify(rdo, tol_one=tol["tol_one"], gap_min=tol["gap_min"])
    return report.to_json(), {}


def _run_ideal(cfg: dict, out: str, jobs: int) -> tuple[dict, dict]:
    system, probe = model_from_json(cfg["model"])
    rdo = rdo_from_model(system, probe)
    res = ideal_asymptotics(rdo, n_max=int(cfg["n_max"]))
    rate_ref = np.log(res.spr_mq) if res.spr_mq > 0 else -np.inf
    rate_ok = bool(
        np.isfinite(res.fitted_rate)
        and np.isfinite(rate_ref)
        and abs(res.fitted_rate - rate_ref) <= 0.1 * abs(rate_ref)
    )
    payload = {
        "fitted_rate": float(res.fitted_rate),
        "spr_mq": float(res.spr_mq),
        "log_spr_mq": float(rate_ref),
        "final_error": float(res.errors[-1]),
    }
    checks = {"rate_within_10pct": rate_ok, "final_error_small": bool(res.errors[-1] <= 1e-8)}
    write_csv(
        os.path.join(out, "ideal_errors.csv"),
        ["n", "error"],
        ([n + 1, float(e)] for n, e in enumerate(res.errors)),
    )
    return payload, checks


def _run_ergodic(cfg: dict, out: str, jobs: int) -> tuple[dict, dict]:
    ens = _build_ensemble(cfg)
    routes = theta_routes(ens)
    coef = float(cfg["bound_coefficient"])

    def one(seed):
        return simulate_forward(
            ens, seed, int(cfg["n_total"]), checkpoint_every=int(cfg["checkpoint_every"])
        )

    results = _seed_map(one, cfg["seeds"], jobs)
    per_seed = []
    bound_ok = True
    for seed, (traj, rep) in zip(cfg["seeds"], results):
        final_d = float(rep.distances[-1])
        final_n = int(rep.checkpoints[-1])
        ok = final_d <= coef / np.sqrt(final_n)
        bound_ok = bound_ok and ok
        per_seed.append(
            {
                "seed": seed,
                "final_distance": final_d,
                "final_n": final_n,
                "bound_ok": bool(ok),
                "max_invariance_drift": float(traj.max_invariance_drift),
            }
        )
        write_csv(
            os.path.join(out, f"ergodic_seed{seed}.csv"),
            ["n", "distance", "bound"],
            (
                [int(n), float(d), float(b)]
                for n, d, b in zip(rep.checkpoints, rep.distances, rep.bound)
            ),
        )
    payload = {
        "per_seed": per_seed,
        "theta_mismatch": float(routes["mismatch"]),
        "spr_mean_mq": float(routes["spr_mean_mq"]),
    }
    checks = {
        "distance_bound": bool(bound_ok),
        "theta_routes_agree": bool(routes["mismatch"] <= 1e-10),
    }
    return payload, checks


def _run_decay(cfg: dict, out: str, jobs: int) -> tuple[dict, dict]:
    ens = _build_ensemble(cfg)
    mean_report = classify(mean_rdo(ens))

    def one(seed):
        return decay_estimator(ens, seed, int(cfg["n_total"]))

    results = _seed_map(one, cfg["seeds"], jobs)
    alphas = [float(r.alpha) for r in results]
    n0s = [int(r.n0) for r in results]
    payload = {
        "per_seed": [
            {"seed": s, **r.to_json()} for s, r in zip(cfg["seeds"], results)
        ],
        "alpha_min": float(min(alphas)),
        "alpha_median": float(np.median(alphas)),
        "n0_max": int(max(n0s)),
        "n0_median": float(np.median(n0s)),
        "mean_in_class": bool(mean_report.in_class_e),
    }
    checks = {
        "alpha_positive_all_seeds": bool(min(alphas) > 0),
        "mean_in_class": bool(mean_report.in_class_e),
    }
    write_csv(
        os.path.join(out, "decay_log_norms.csv"),
        ["n"] + [f"seed{s}" for s in cfg["seeds"]],
        (
            [n + 1] + [float(r.log_norms[n]) for r in results]
            for n in range(int(cfg["n_total"]))
        ),
    )
    return payload, checks


def _run_reverse(cfg: dict, out: str, jobs: int) -> tuple[dict, dict]:
    ens = _build_ensemble(cfg)

    def one(seed):
        return simulate_reverse(
            ens, seed, int(cfg["n_total"]), checkpoint_every=int(cfg["checkpoint_every"])
        )

    results = _seed_map(one, cfg["seeds"], jobs)
    per_seed = []
    decays = True
    for seed, rep in zip(cfg["seeds"], results):
        pos = rep.sigma_ratios > 0
        if pos.sum() >= 2:
            rate = float(np.polyfit(rep.checkpoints[pos], np.log(rep.sigma_ratios[pos]), 1)[0])
        else:
            rate = -np.inf
        ok = rate < 0 and rep.residuals[-1] <= rep.residuals[0]
        decays = decays and ok
        per_seed.append(
            {
                "seed": seed,
                "sigma_ratio_rate": rate,
                "final_residual": float(rep.residuals[-1]),
                "final_sigma_ratio": float(rep.sigma_ratios[-1]),
            }
        )
        write_csv(
            os.path.join(out, f"reverse_seed{seed}.csv"),
            ["n", "residual", "sigma_ratio"],
            (
                [int(n), float(x), float(y)]
                for n, x, y in zip(rep.checkpoints, rep.residuals, rep.sigma_ratios)
            ),
        )
    return {"per_seed": per_seed}, {"rank_one_decay": bool(decays)}


def _run_lyapunov(cfg: dict, out: str, jobs: int) -> tuple[dict, dict]:
    ens = _build_ensemble(cfg)

    def one(seed):
        return lyapunov(ens, seed, int(cfg["n_total"]), reorth_every=int(cfg["reorth_every"]))

    results = _seed_map(one, cfg["seeds"], jobs)
    payload = {
        "per_seed": [{"seed": s, **r.to_json()} for s, r in zip(cfg["seeds"], results)]
    }
    g1 = max(abs(r.gamma_1) for r in results)
    gap = min(r.gap for r in results)
    checks = {"gamma1_zero": bool(g1 <= 2e-3), "gap_positive": bool(gap > 0)}
    return payload, checks


def _run_instant(cfg: dict, out: str, jobs: int) -> tuple[dict, dict]:
    ens = _build_ensemble(cfg)
    kind = cfg["family"]
    if kind == "identity":
        fam = identity_family(ens)
    elif kind == "probe_energy":
        fam = probe_energy_family(ens)
    else:
        fam = system_observable_family(ens, matrix_from_json(cfg["a_s"], "a_s"))
    closed = ergodic_instant_limit(ens, fam)
    mc = ergodic_instant_monte_carlo(
        ens, fam, master_seed=cfg["seeds"][0], n_total=int(cfg["n_total"]), n_seeds=len(cfg["seeds"])
    )
    diff = abs(mc["mean"] - closed)
    within = bool(np.isfinite(mc["stderr"]) and diff <= 3.0 * max(mc["stderr"], 1e-12))
    payload = {
        "family": kind,
        "closed_form": [closed.real, closed.imag],
        "monte_carlo": [mc["mean"].real, mc["mean"].imag],
        "stderr": mc["stderr"],
        "abs_difference": float(diff),
    }
    return payload, {"mc_within_3_sigma": within}


def _run_fluxes(cfg: dict, out: str, jobs: int) -> tuple[dict, dict]:
    ens = _build_ensemble(cfg)
    closed = flux_closed_form(ens)
    payload = {"closed_form": closed.to_json()}
    betas = [a.probe.beta_e for a in ens.atoms]
    deterministic_beta = max(betas) - min(betas) <= 1e-14
    checks = {"real_valued": bool(closed.imag_defect <= 1e-9)}
    if deterministic_beta:
        checks["second_law"] = bool(abs(closed.residual) <= 1e-8)
    if cfg["monte_carlo"]:
        rho_init = (
            matrix_from_json(cfg["rho_init"], "rho_init") if "rho_init" in cfg else None
        )
        mc = flux_monte_carlo(
            ens,
            master_seed=cfg["seeds"][0],
            n_total=int(cfg["n_total"]),
            n_seeds=max(len(cfg["seeds"]), 2),
            rho_init=rho_init,
        )
        payload["monte_carlo"] = mc.to_json()
        checks["mc_de_within_3_sigma"] = bool(
            abs(mc.de_plus - closed.de_plus) <= 3.0 * max(mc.de_stderr, 1e-12)
        )
        checks["mc_ds_within_3_sigma"] = bool(
            abs(mc.ds_plus - closed.ds_plus) <= 3.0 * max(mc.ds_stderr, 1e-12)
        )
    return payload, checks


def _run_oracle_check(cfg: dict, out: str, jobs: int) -> tuple[dict, dict]:
    system, probe = model_from_json(cfg["model"])
    # fail fast: the largest chain must fit the dense-algebra guard
    _chain_dims(system, [probe] * int(cfg["m_max"]), int(cfg["m_max"]))
    rdo = rdo_from_model(system, probe)
    _, sqrt_rho, psi_s = system_gns_data(system)
    rho_s = sqrt_rho @ sqrt_rho
    rng = trajectory_rng(int(cfg["seed"]))
    d = system.dim_s
    worst = 0.0
    for m in range(1, int(cfg["m_max"]) + 1):
        power = np.linalg.matrix_power(rdo.m, m)
        for _ in range(int(cfg["n_observables"])):
            a_s = random_hermitian(d, rng)
            lhs = np.vdot(psi_s, power @ vec(a_s @ sqrt_rho))
            rhs = full_chain_oracle(
                system,
                [probe] * m,
                ObservableWindow.system_only(a_s, probe.dim_e),
                m,
                rho_s,
            )
            worst = max(worst, abs(lhs - rhs))
    payload = {"max_residual": float(worst), "m_max": int(cfg["m_max"])}
    return payload, {"oracle_agreement": bool(worst <= float(cfg["tol"]))}


_RUNNERS = {
    "classify": _run_classify,
    "ideal": _run_ideal,
    "ergodic": _run_ergodic,
    "decay": _run_decay,
    "reverse": _run_reverse,
    "lyapunov": _run_lyapunov,
    "instant": _run_instant,
    "fluxes": _run_fluxes,
    "oracle-check": _run_oracle_check,
}


def run(cfg: dict, out: str = ".", jobs: int = 1) -> dict:
    """Execute a resolved config and return the RunReport dict."""
    os.makedirs(out, exist_ok=True)
    start = time.monotonic()
    payload, checks = _RUNNERS[cfg["experiment"]](cfg, out, jobs)
    elapsed = time.monotonic() - start
    digest = hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode()
    ).hexdigest()[:12]
    return {
        "config": cfg,
        "run_id": digest,
        "experiment": cfg["experiment"],
        "payload": payload,
        "checks": checks,
        "passed": all(checks.values()),
        "wall_time_s": elapsed,
    }


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="ries", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--seed-offset", type=int, default=0, metavar="K")
    p_run.add_argument("--out", default=".", metavar="DIR")
    p_run.add_argument("--jobs", type=int, default=1, metavar="N")
    p_val = sub.add_parser("validate", help="validate a config and print it resolved")
    p_val.add_argument("config")
    args = parser.parse_args(argv)

    try:
        cfg = validate_config_file(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "validate":
        json.dump(cfg, sys.stdout, sort_keys=True, indent=2)
        print()
        return 0

    if args.seed_offset:
        if "seeds" in cfg:
            cfg["seeds"] = [s + args.seed_offset for s in cfg["seeds"]]
        if "seed" in cfg:
            cfg["seed"] = cfg["seed"] + args.seed_offset
    try:
        report = run(cfg, out=args.out, jobs=args.jobs)
    except CapacityError as exc:
        print(f"capacity guard: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (EnsembleError, RdoValidationError) as exc:
        print(f"theorem-check failure: {exc}", file=sys.stderr)
        return 1
    dump_json(report, os.path.join(args.out, "summary.json"))
    status = "pass" if report["passed"] else "FAIL"
    print(f"{cfg['experiment']}: {status} ({report['wall_time_s']:.2f} s)")
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    raise SystemExit(main())
