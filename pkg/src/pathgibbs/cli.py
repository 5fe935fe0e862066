"""Command-line front end: config parsing, study dispatch, output management.

Exit codes: 0 when every assertion passes, 2 on an assertion failure, 1 on a
usage or configuration error.  The PATHGIBBS_OUT environment variable
overrides --out.  --deterministic forces a single worker and the fixed
merge order, making rerun outputs byte-identical.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import load_config, parse_config_text, render_config, study_params
from .errors import ConfigError, PathGibbsError
from .experiments import (
    Assertions,
    RunManifest,
    STUDY_VARIANTS,
    StudySpec,
    _now,
    _out_dir,
    run_study,
)

SUBCOMMAND_STUDY = {
    "sample": "pphi1_validation",
    "phase": "phase_transition",
    "clt": "clt_diffusion",
    "polaron": "polaron_energy",
    "cluster": "cluster_identity",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pathgibbs",
        description="Simulation and verification of Gibbs measures on Brownian paths",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("spectral", "grid eigensolver anchors and diagnostics"),
        ("sample", "reference-process validation study (or tightness via config)"),
        ("phase", "double-well long-range boundary-dependence study"),
        ("clt", "increment-process diffusion study"),
        ("polaron", "ground-state energy study"),
        ("cluster", "expansion identity study"),
        ("validate-config", "parse and validate a config file"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="path to key=value config file")
        p.add_argument("--seed", type=int, default=None, help="64-bit master seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--deterministic", action="store_true",
                       help="single worker, fixed reduction order")
    return parser


def _resolve_out(args):
    return os.environ.get("PATHGIBBS_OUT", args.out)


def run_spectral_anchors(cfg, out_base, seed, workers, deterministic):
    """Analytic anchor checks for the eigensolver, recorded like a study."""
    import numpy as np

    from .spectral import Grid1D, PotentialSpec, ground_state

    asr = Assertions()
    out = _out_dir(out_base, "spectral")
    manifest = RunManifest("spectral", dict(cfg), seed, workers, deterministic)
    manifest.started = _now()

    x_min = cfg.get("spectral.x_min", -10.0)
    x_max = cfg.get("spectral.x_max", 10.0)
    n = cfg.get("spectral.n_points", 2001)
    m = cfg.get("spectral.m", 64)
    sd = ground_state(Grid1D(x_min, x_max, n), PotentialSpec.harmonic(), m=m)
    manifest.spectral_digest = sd.digest()
    asr.check("harmonic_E0", abs(sd.E0 - 0.5) < 1e-6, f"E0 = {sd.E0!r}")
    asr.check("harmonic_gap", abs(sd.gap - 1.0) < 1e-4, f"gap = {sd.gap!r}")
    res = sd.eigen_residuals().max()
    asr.check("eigen_residuals", res < 1e-8, f"max residual {res:.2e}")
    norm = abs(float((sd.psi0**2).sum() * sd.grid.h) - 1.0)
    asr.check("psi0_normalised", norm < 1e-12, f"|sum psi0^2 h - 1| = {norm:.2e}")

    sd_box = ground_state(Grid1D(0.0, 20.0, 2001), PotentialSpec.box(20.0), m=8)
    target = np.pi**2 / 800.0
    asr.check("box_E0", abs(sd_box.E0 - target) < 1e-7,
              f"E0 = {sd_box.E0!r} vs pi^2/800 = {target!r}")

    manifest.assertions = asr.records
    manifest.finished = _now()
    manifest.write(out)
    asr.print_lines()
    return asr


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0

    try:
        cfg = load_config(args.config) if args.config else {}
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    if args.command == "validate-config":
        if not args.config:
            print("validate-config requires --config", file=sys.stderr)
            return 1
        # canonical echo must re-parse identically
        if parse_config_text(render_config(cfg)) != cfg:
            print("config round-trip mismatch", file=sys.stderr)
            return 1
        print(f"ok: {len(cfg)} keys")
        return 0

    seed = args.seed if args.seed is not None else cfg.get("sampler.seed")
    if seed is None:
        print("no seed: pass --seed or set sampler.seed in the config",
              file=sys.stderr)
        return 1
    workers = 1 if args.deterministic else cfg.get("sampler.workers", args.workers)
    out_base = cfg.get("out.dir", _resolve_out(args))

    try:
        if args.command == "spectral":
            asr = run_spectral_anchors(cfg, out_base, seed, workers,
                                       args.deterministic)
        else:
            variant = cfg.get("study.variant", SUBCOMMAND_STUDY[args.command])
            if args.command == "sample" and variant not in ("pphi1_validation", "tightness"):
                print(f"subcommand sample cannot run study {variant!r}", file=sys.stderr)
                return 1
            if args.command != "sample" and variant != SUBCOMMAND_STUDY[args.command]:
                print(f"subcommand {args.command} cannot run study {variant!r}",
                      file=sys.stderr)
                return 1
            params = study_params(cfg)
            spec = StudySpec(variant, params)
            asr = run_study(spec, out_base, seed=seed, workers=workers,
                            deterministic=args.deterministic)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except PathGibbsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0 if asr.all_passed else 2


def entry():  # console-script hook
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
