"""Command-line driver: configs, seed sweeps, acceptance suites, artifacts.

Subcommands
-----------
gen-codebook   generate and save a low-coherence direction set
run            full pipeline per seed: dataset -> optimizer -> verify -> risk
verify         closed-form / invariant checks only (fresh run or a checkpoint)
risk           risk table only, as CSV
acceptance     pinned acceptance suites ("all" or one by name)

Configs are YAML files whose keys mirror the `run` flags; a flag given on
the command line overrides the file.  Every JSON artifact embeds the fully
resolved config so a report is reproducible from the file alone.  The
default output directory is $GENGAP_OUT, falling back to the working
directory.

Exit codes: 0 all enabled checks passed, 1 a check failed, 2 bad
configuration or usage.
"""

import argparse
import dataclasses
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import acceptance as _acceptance
from .codebook import generate_codebook, load_codebook, save_codebook
from .errors import GengapError, OutOfRange
from .instance_gd import (
    GdDataset,
    GdParams,
    good_event_gd,
    loss_gd,
    sample_gd_dataset,
)
from .instance_sgd import (
    SgdDataset,
    SgdParams,
    force_good_event_sgd,
    good_event_sgd,
    loss_sgd,
    sample_sgd_dataset,
)
from .instance_smallstep import SmallstepParams, loss_smallstep
from .optim import load_trajectory, run_gd, run_sgd, run_smallstep, save_trajectory
from .risk import RiskReport, gap_report
from .smoothing import SmoothingConfig, smoothed_value
from .verify import check_margins, check_norm_bound, check_trajectory

FAMILIES = ("gd", "sgd", "smallstep")
POLICIES = ("unconditioned", "reject-until-E", "force")
LIPSCHITZ = {"gd": 5.0, "sgd": 4.0, "smallstep": 1.0}


def _jsonable(obj):
    """Recursively convert reports/configs into plain JSON types."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name))
                for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (range,)):
        return list(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _default_out():
    return Path(os.environ.get("GENGAP_OUT", "."))


# ---------------------------------------------------------------------------
# experiment configuration
# ---------------------------------------------------------------------------

_CONFIG_DEFAULTS = dict(
    family=None,
    n=None,
    directions=None,
    steps=None,
    eta=None,
    theorem_mode=True,
    dprime=None,
    dim=None,
    seeds=(0,),
    policy=None,
    projected=False,
    suffix=(1,),
    mc_samples=20_000,
    mc_seed=0,
    mode="oracle",
    smoothing=False,
    smoothing_samples=20_000,
    smoothing_seed=0,
    codebook=None,
    codebook_seed=0,
    out=None,
)


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """One resolved experiment: family, sizes, seeds, policies, budgets."""

    family: str
    n: int = None
    directions: int = None
    steps: int = None
    eta: float = None
    theorem_mode: bool = True
    dprime: int = None
    dim: int = None
    seeds: tuple = (0,)
    policy: str = None
    projected: bool = False
    suffix: tuple = (1,)
    mc_samples: int = 20_000
    mc_seed: int = 0
    mode: str = "oracle"
    smoothing: bool = False
    smoothing_samples: int = 20_000
    smoothing_seed: int = 0
    codebook: str = None
    codebook_seed: int = 0
    out: str = None

    def validate(self):
        if self.family not in FAMILIES:
            raise OutOfRange(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.mode not in ("oracle", "reference"):
            raise OutOfRange(f"mode must be 'oracle' or 'reference', got {self.mode!r}")
        if not self.seeds:
            raise OutOfRange("seeds must be non-empty")
        if self.family == "smallstep":
            if self.eta is None or self.steps is None:
                raise OutOfRange("smallstep needs explicit eta and steps")
            return
        if self.n is None or self.directions is None:
            raise OutOfRange(f"{self.family} needs n and directions")
        if self.family == "gd" and self.steps is None:
            raise OutOfRange("gd needs steps")
        if self.policy is None:
            raise OutOfRange(
                "dataset policy must be stated explicitly: "
                "unconditioned, reject-until-E (gd), or force (sgd)"
            )
        if self.family == "gd" and self.policy not in ("unconditioned", "reject-until-E"):
            raise OutOfRange(f"gd policy must be unconditioned or reject-until-E, got {self.policy!r}")
        if self.family == "sgd" and self.policy not in ("unconditioned", "force"):
            raise OutOfRange(f"sgd policy must be unconditioned or force, got {self.policy!r}")
        if self.family == "sgd" and self.policy == "force" and self.directions < self.n + 1:
            raise OutOfRange(
                f"forcing the one-pass good event needs directions >= n+1; "
                f"got N={self.directions}, n={self.n}"
            )
        if self.eta is not None and self.theorem_mode:
            horizon = self.steps if self.family == "gd" else self.n
            cap = 1.0 / (5.0 * math.sqrt(horizon))
            if self.eta > cap * (1.0 + 1e-12):
                raise OutOfRange(
                    f"theorem mode caps eta at 1/(5*sqrt({horizon})) = {cap:.6g}; "
                    f"got {self.eta}; pass theorem_mode: false to override"
                )

    def build_params(self):
        if self.family == "gd":
            return GdParams(n=self.n, n_directions=self.directions,
                            steps=self.steps, eta=self.eta, dprime=self.dprime)
        if self.family == "sgd":
            return SgdParams(n=self.n, n_directions=self.directions,
                             eta=self.eta, dprime=self.dprime)
        return SmallstepParams(eta=self.eta, steps=self.steps, dim=self.dim)

    def resolved(self, params):
        """Plain dict with defaults filled in, for artifact provenance."""
        d = _jsonable(self)
        d["eta"] = params.eta
        d["dim"] = params.dim
        if self.family != "smallstep":
            d["dprime"] = params.dprime
        return d


def load_config(path):
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise OutOfRange(f"config {path} must be a mapping, got {type(raw).__name__}")
    unknown = set(raw) - set(_CONFIG_DEFAULTS)
    if unknown:
        raise OutOfRange(f"unknown config keys: {sorted(unknown)}")
    return raw


def _parse_seeds(value):
    """Accept [1,2,3], {start,stop}, '1,2,3', or '0..8' (stop exclusive)."""
    if value is None:
        return None
    if isinstance(value, dict):
        return tuple(range(int(value["start"]), int(value["stop"])))
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    if isinstance(value, str):
        if ".." in value:
            lo, hi = value.split("..", 1)
            return tuple(range(int(lo), int(hi)))
        return tuple(int(v) for v in value.split(","))
    return (int(value),)


def _parse_suffix(value):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    if isinstance(value, str):
        return tuple(int(v) for v in value.split(","))
    return (int(value),)


def config_from_args(args):
    """File values first, then command-line overrides, then validation."""
    merged = dict(_CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        merged.update(load_config(args.config))
    for key in _CONFIG_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    merged["seeds"] = _parse_seeds(merged["seeds"]) or (0,)
    merged["suffix"] = _parse_suffix(merged["suffix"]) or (1,)
    cfg = ExperimentConfig(**merged)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# pipeline pieces shared by run/verify/risk
# ---------------------------------------------------------------------------


def _get_codebook(cfg, params, outdir=None):
    if cfg.family == "smallstep":
        return None
    if cfg.codebook:
        cb = load_codebook(cfg.codebook)
        if cb.n_vectors < params.n_directions or cb.dim != params.dprime:
            raise OutOfRange(
                f"codebook file holds {cb.n_vectors} directions of dim {cb.dim}; "
                f"the run needs {params.n_directions} of dim {params.dprime}"
            )
    else:
        cb = generate_codebook(params.n_directions, params.dprime,
                               seed=cfg.codebook_seed)
    if outdir is not None:
        save_codebook(cb, outdir / "codebook.json")
    return cb


def _make_dataset(cfg, params, seed):
    """Returns (dataset, event_report, rejections); smallstep -> (None, None, 0)."""
    if cfg.family == "smallstep":
        return None, None, 0
    if cfg.family == "gd":
        if cfg.policy == "reject-until-E":
            # child-seeded redraw loop so the rejection count is part of the
            # report (the library sampler rejects inside one private stream)
            rng = np.random.default_rng(seed)
            rejections = 0
            while True:
                child = int(rng.integers(0, 2**62))
                ds = sample_gd_dataset(params, child, policy="unconditioned")
                event = good_event_gd(ds, params)
                if event:
                    return ds, event, rejections
                rejections += 1
        ds = sample_gd_dataset(params, seed, policy="unconditioned")
        return ds, good_event_gd(ds, params), 0
    if cfg.policy == "force":
        ds = force_good_event_sgd(params, seed)
    else:
        ds = sample_sgd_dataset(params, seed)
    return ds, good_event_sgd(ds, params), 0


def _run_optimizer(cfg, params, codebook, dataset):
    if cfg.family == "gd":
        return run_gd(codebook, dataset, params, mode=cfg.mode,
                      projected=cfg.projected)
    if cfg.family == "sgd":
        return run_sgd(codebook, dataset, params, mode=cfg.mode,
                       projected=cfg.projected)
    return run_smallstep(params, projected=cfg.projected)


def _verify_one(cfg, params, codebook, dataset, traj, event):
    """Closed-form, norm, and margin checks; returns (payload, passed).

    On-event datasets get the full battery.  Off-event datasets (possible
    only under the unconditioned policy) skip the closed-form and margin
    checks — the designed dynamics are conditional on the event — and the
    report says so rather than failing the run.
    """
    payload = {"event": None if event is None else _jsonable(event)}
    checks_passed = True
    on_event = event is None or bool(event)
    if on_event:
        rep = check_trajectory(traj, cfg.family, params, dataset, codebook)
        margins = check_margins(traj, cfg.family, params, dataset, codebook)
        payload["trajectory"] = _jsonable(rep)
        payload["margins"] = _jsonable(margins)
        checks_passed &= rep.ok and margins.ok
    else:
        payload["trajectory"] = "skipped: dataset is off-event"
        payload["margins"] = "skipped: dataset is off-event"
    norms = check_norm_bound(traj)
    payload["norms"] = _jsonable(norms)
    checks_passed &= norms.ok
    payload["passed"] = bool(checks_passed)
    return payload, bool(checks_passed)


def _empirical_loss_closure(cfg, params, codebook, dataset):
    """Batched training-risk closure for smoothing checks."""
    if cfg.family == "gd":
        def loss(w):
            total = 0.0
            for s in zip(dataset.masks, dataset.slots):
                total = total + loss_gd(w, s, params, codebook, mode=cfg.mode)
            return total / dataset.n
    elif cfg.family == "sgd":
        def loss(w):
            total = 0.0
            for mask in dataset.masks:
                total = total + loss_sgd(w, mask, params, codebook, mode=cfg.mode)
            return total / dataset.n
    else:
        def loss(w):
            return loss_smallstep(w, params)
    return loss


def _smoothing_check(cfg, params, codebook, dataset, traj):
    """Smoothed training risk at w_T agrees with the plain value."""
    loss = _empirical_loss_closure(cfg, params, codebook, dataset)
    w = traj.iterate(traj.steps)
    scfg = SmoothingConfig(params.smoothing_delta, cfg.smoothing_samples,
                           seed=cfg.smoothing_seed)
    val, stderr = smoothed_value(loss, w, scfg)
    plain = float(loss(w))
    bound = LIPSCHITZ[cfg.family] * scfg.delta + 3.0 * stderr
    ok = abs(val - plain) <= bound
    return {
        "delta": scfg.delta,
        "samples": cfg.smoothing_samples,
        "seed": cfg.smoothing_seed,
        "smoothed": val,
        "plain": plain,
        "abs_diff": abs(val - plain),
        "bound": bound,
        "passed": bool(ok),
    }, bool(ok)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen_codebook(args):
    out = Path(args.out) if args.out else _default_out() / (
        f"codebook-N{args.directions}-s{args.seed}.json"
    )
    cb = generate_codebook(args.directions, args.dim, seed=args.seed,
                           max_attempts=args.max_attempts)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_codebook(cb, out)
    gram = np.abs(cb.vectors @ cb.vectors.T)
    np.fill_diagonal(gram, 0.0)
    print(f"wrote {out}: {cb.n_vectors} directions, dim {cb.dim}, "
          f"worst coherence {gram.max():.4f}")
    return 0


def cmd_run(args):
    cfg = config_from_args(args)
    outdir = Path(cfg.out) if cfg.out else _default_out()
    outdir.mkdir(parents=True, exist_ok=True)
    params = cfg.build_params()
    codebook = _get_codebook(cfg, params, outdir)
    resolved = cfg.resolved(params)

    all_passed = True
    per_seed = []
    risk_rows = []
    for seed in cfg.seeds:
        t0 = time.perf_counter()
        dataset, event, rejections = _make_dataset(cfg, params, seed)
        traj = _run_optimizer(cfg, params, codebook, dataset)
        stem = f"{cfg.family}-s{seed}"
        save_trajectory(traj, outdir / f"{stem}-trajectory")
        if dataset is not None:
            dataset.save(outdir / f"{stem}-dataset.json")

        verify_payload, verify_ok = _verify_one(
            cfg, params, codebook, dataset, traj, event)
        reports = gap_report(traj, dataset, params, codebook,
                             suffix_lengths=cfg.suffix,
                             n_samples=cfg.mc_samples, seed=cfg.mc_seed,
                             mode=cfg.mode)
        risk_rows += [f"{seed},{r.to_csv_row()}" for r in reports]

        seed_result = {
            "seed": seed,
            "policy": cfg.policy,
            "rejections": rejections,
            "verify": verify_payload,
            "risk": [json.loads(r.to_json()) for r in reports],
            "elapsed_seconds": time.perf_counter() - t0,
        }
        passed = verify_ok
        if cfg.smoothing:
            smooth_payload, smooth_ok = _smoothing_check(
                cfg, params, codebook, dataset, traj)
            seed_result["smoothing"] = smooth_payload
            passed &= smooth_ok
        seed_result["passed"] = bool(passed)
        all_passed &= passed
        per_seed.append(seed_result)

        verify_artifact = {"config": resolved, "seed": seed,
                           "policy": cfg.policy, "rejections": rejections}
        verify_artifact.update(verify_payload)
        (outdir / f"{stem}-verify.json").write_text(
            json.dumps(verify_artifact, indent=2))
        if rejections:
            print(f"seed {seed}: {rejections} dataset draws rejected before "
                  "the good event")
        print(f"seed {seed}: {'pass' if passed else 'FAIL'} "
              f"({seed_result['elapsed_seconds']:.1f}s)")

    (outdir / f"{cfg.family}-risk.csv").write_text(
        "seed," + RiskReport.CSV_HEADER + "\n" + "\n".join(risk_rows) + "\n")
    summary = {"config": resolved, "results": per_seed, "passed": bool(all_passed)}
    (outdir / f"{cfg.family}-run-summary.json").write_text(
        json.dumps(summary, indent=2))
    print(f"artifacts in {outdir}; overall: {'pass' if all_passed else 'FAIL'}")
    return 0 if all_passed else 1


def _load_inputs_for_check(cfg, args, params):
    codebook = _get_codebook(cfg, params)
    if getattr(args, "dataset", None) and cfg.family != "smallstep":
        cls = GdDataset if cfg.family == "gd" else SgdDataset
        dataset = cls.load(args.dataset)
        if cfg.family == "gd":
            event = good_event_gd(dataset, params)
        else:
            event = good_event_sgd(dataset, params)
        rejections = 0
    else:
        dataset, event, rejections = _make_dataset(cfg, params, cfg.seeds[0])
    if getattr(args, "trajectory", None):
        traj = load_trajectory(args.trajectory)
        if traj.dim != params.dim:
            raise OutOfRange(
                f"checkpoint dimension {traj.dim} does not match the "
                f"configured instance ({params.dim})"
            )
    else:
        traj = _run_optimizer(cfg, params, codebook, dataset)
    return codebook, dataset, event, rejections, traj


def cmd_verify(args):
    cfg = config_from_args(args)
    params = cfg.build_params()
    codebook, dataset, event, rejections, traj = _load_inputs_for_check(
        cfg, args, params)
    payload, passed = _verify_one(cfg, params, codebook, dataset, traj, event)
    artifact = {"config": cfg.resolved(params), "seed": cfg.seeds[0],
                "policy": cfg.policy, "rejections": rejections}
    artifact.update(payload)
    text = json.dumps(artifact, indent=2)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}: {'pass' if passed else 'FAIL'}")
    else:
        print(text)
    return 0 if passed else 1


def cmd_risk(args):
    cfg = config_from_args(args)
    params = cfg.build_params()
    codebook, dataset, _, _, traj = _load_inputs_for_check(cfg, args, params)
    reports = gap_report(traj, dataset, params, codebook,
                         suffix_lengths=cfg.suffix, n_samples=cfg.mc_samples,
                         seed=cfg.mc_seed, mode=cfg.mode)
    lines = ["seed," + RiskReport.CSV_HEADER]
    lines += [f"{cfg.seeds[0]},{r.to_csv_row()}" for r in reports]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_acceptance(args):
    names = list(_acceptance.SUITES) if args.suite == "all" else [args.suite]
    results = []
    for name in names:
        res = _acceptance.run_suite(name)
        results.append(res)
        print(res.summary())
        budget = _acceptance.BUDGET_SECONDS[name]
        if res.elapsed > budget:
            print(f"  note: exceeded the {budget:.0f}s budget")
    if args.json:
        payload = [{
            "suite": r.name,
            "passed": r.passed,
            "elapsed_seconds": r.elapsed,
            "budget_seconds": _acceptance.BUDGET_SECONDS[r.name],
            "checks": _jsonable(r.checks),
        } for r in results]
        Path(args.json).write_text(json.dumps(payload, indent=2))
        print(f"wrote {args.json}")
    priced = all(r.passed and r.elapsed <= _acceptance.BUDGET_SECONDS[r.name]
                 for r in results)
    return 0 if priced else 1


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_config_flags(p):
    p.add_argument("--config", help="YAML config file; flags override it")
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--n", type=int, help="training-set size (gd/sgd)")
    p.add_argument("--directions", type=int, help="codebook size N")
    p.add_argument("--steps", type=int, help="horizon T (gd/smallstep)")
    p.add_argument("--eta", type=float, help="step size; default 1/(5*sqrt(horizon))")
    p.add_argument("--theorem-mode", dest="theorem_mode", action="store_true",
                   default=None, help="cap eta at the designed rule (default on)")
    p.add_argument("--no-theorem-mode", dest="theorem_mode", action="store_false",
                   default=None)
    p.add_argument("--dprime", type=int, help="per-step block dimension")
    p.add_argument("--dim", type=int, help="ambient dimension (smallstep only)")
    p.add_argument("--seeds", help="comma list '1,2,3' or range '0..8'")
    p.add_argument("--policy", choices=POLICIES,
                   help="dataset policy (required for gd/sgd)")
    p.add_argument("--projected", action="store_true", default=None)
    p.add_argument("--suffix", help="comma list of suffix lengths, e.g. '1,4,16'")
    p.add_argument("--mc-samples", dest="mc_samples", type=int)
    p.add_argument("--mc-seed", dest="mc_seed", type=int)
    p.add_argument("--mode", choices=("oracle", "reference"))
    p.add_argument("--smoothing", action="store_true", default=None,
                   help="also check the smoothed training risk at w_T")
    p.add_argument("--smoothing-samples", dest="smoothing_samples", type=int)
    p.add_argument("--smoothing-seed", dest="smoothing_seed", type=int)
    p.add_argument("--codebook", help="path to a saved codebook JSON")
    p.add_argument("--codebook-seed", dest="codebook_seed", type=int)
    p.add_argument("--out", help="output directory (default $GENGAP_OUT or .)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gengap",
        description="Hard-instance optimization runs with closed-form checks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-codebook", help="generate a low-coherence codebook")
    p.add_argument("--directions", type=int, required=True)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-attempts", dest="max_attempts", type=int,
                   default=100_000)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gen_codebook)

    p = sub.add_parser("run", help="dataset -> optimizer -> verify -> risk")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="closed-form and invariant checks only")
    _add_config_flags(p)
    p.add_argument("--trajectory", help="checkpoint basepath to verify")
    p.add_argument("--dataset", help="dataset JSON to verify against")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("risk", help="empirical/population risk table as CSV")
    _add_config_flags(p)
    p.add_argument("--trajectory", help="checkpoint basepath to evaluate")
    p.add_argument("--dataset", help="dataset JSON to evaluate against")
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("acceptance", help="run pinned acceptance suites")
    p.add_argument("suite", nargs="?", default="all",
                   choices=("all",) + tuple(_acceptance.SUITES))
    p.add_argument("--json", help="also write results to this JSON file")
    p.set_defaults(func=cmd_acceptance)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GengapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
