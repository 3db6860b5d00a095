"""Command-line driver: ``rhyde simulate | denoise | detect | evaluate | inspect``.

Exit codes: 0 success, 2 bad configuration, 3 I/O or file-format error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import detect, hsi, metrics, noise, pipeline
from .denoisers import BACKEND, REGISTRY, get_denoiser, parse_options
from .errors import NumericalError, RhydeError, ValidationError
from .solver import RhydeParams
from .subspace import left_singular

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("rhyde")


def _fmt(v) -> str:
    if isinstance(v, float):
        return "inf" if v == math.inf else ("-inf" if v == -math.inf else repr(v))
    if isinstance(v, np.floating):
        return _fmt(float(v))
    return str(v)


def write_manifest(path: Path, items: dict) -> None:
    with open(path, "w") as fh:
        for k, v in items.items():
            fh.write(f"{k}={_fmt(v)}\n")


def read_key_values(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValidationError(f"{path}:{lineno}: expected key=value")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    return out


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    anomaly = None
    if args.anomaly_spectrum:
        anomaly = np.loadtxt(args.anomaly_spectrum, delimiter=",", ndmin=1)
    spec = hsi.SimulationSpec(
        rows=args.rows, cols=args.cols, n_b=args.bands, p_true=args.p_true,
        implant_rate=args.implant_rate, noise_u=args.noise_u, seed=args.seed,
        anomaly_spectrum=anomaly, anomaly_scale=args.anomaly_scale, smoothness=args.smoothness,
    )
    sim = hsi.simulate_semireal(spec)
    out = _out_dir(args)
    hsi.save_hsc(hsi.matrix_to_cube(sim.clean, spec.rows, spec.cols), out / "clean.hsc")
    hsi.save_hsc(hsi.matrix_to_cube(sim.noisy, spec.rows, spec.cols), out / "noisy.hsc")
    hsi.save_mask_csv(sim.mask, spec.cols, out / "mask.csv")
    with open(out / "noise_std.csv", "w") as fh:
        fh.write("band,std\n")
        for b, s in enumerate(sim.noise_std):
            fh.write(f"{b},{_fmt(float(s))}\n")
    write_manifest(out / "manifest.txt", {
        "command": "simulate", "seed": spec.seed, "rows": spec.rows, "cols": spec.cols,
        "bands": spec.n_b, "p_true": spec.p_true, "implant_rate": spec.implant_rate,
        "noise_u": spec.noise_u, "anomaly_scale": spec.anomaly_scale,
        "anomaly_spectrum": args.anomaly_spectrum or "default", "smoothness": spec.smoothness,
        "n_anomalies": int(sim.mask.sum()),
    })
    log.info("simulated %dx%dx%d cube with %d anomalies in %s", spec.rows, spec.cols, spec.n_b, sim.mask.sum(), out)
    return EXIT_OK


# --------------------------------------------------------------------------
# denoise
# --------------------------------------------------------------------------

def cmd_denoise(args) -> int:
    cube = hsi.load_hsc(args.input)
    y = hsi.cube_to_matrix(cube).astype(np.float64)
    if args.subspace_dim is None:
        raise ValidationError("--subspace-dim is required")
    params = RhydeParams(
        p=args.subspace_dim, mu1=args.mu1, mu2=args.mu2, mu3=args.mu3, lambda2=args.lambda2,
        p_value=args.p_value, max_iters=args.max_iters, rel_tol=args.rel_tol,
    )
    options = parse_options(args.denoiser_opt)
    den = get_denoiser(args.denoiser, **options)
    nm = noise.load_noise_model(args.noise_cov) if args.noise_cov else None
    res = pipeline.denoise(
        y, (cube.rows, cube.cols), params, den, noise_model=nm, anscombe=args.anscombe,
        estimate_noise=not args.assume_white, noise_structure=args.noise_structure,
    )
    out = _out_dir(args)
    hsi.save_hsc(hsi.matrix_to_cube(res.x_hat, cube.rows, cube.cols), out / "denoised.hsc")
    hsi.save_hsc(hsi.matrix_to_cube(res.solver.s_hat, cube.rows, cube.cols), out / "s_hat.hsc")
    if args.save_noise_cov:
        noise.save_noise_model(res.noise_model, out / "noise_cov.hsn")
    with open(out / "convergence.csv", "w") as fh:
        fh.write("iter,rel_change\n")
        for k, v in enumerate(res.solver.trace, 1):
            fh.write(f"{k},{_fmt(float(v))}\n")
    s_norm = float(np.linalg.norm(res.solver.s_hat))
    z_norm = float(np.linalg.norm(res.solver.z_hat))
    write_manifest(out / "manifest.txt", {
        "command": "denoise", "seed": args.seed, "input": args.input, "rows": cube.rows,
        "cols": cube.cols, "bands": cube.bands, "subspace_dim": params.p, "mu1": params.mu1,
        "mu2": params.mu2, "mu3": params.mu3, "p_value": params.p_value,
        "lambda2": res.solver.lambda2, "lambda2_override": args.lambda2 is not None,
        "max_iters": params.max_iters, "rel_tol": params.rel_tol, "denoiser": den.name,
        "denoiser_options": ",".join(f"{k}={v}" for k, v in sorted(options.items())) or "default",
        "kernel_backend": BACKEND, "noise_cov": args.noise_cov or ("identity" if args.assume_white else "estimated"),
        "noise_structure": args.noise_structure, "anscombe": args.anscombe,
        "iters_run": res.solver.iters_run, "final_rel_change": res.solver.trace[-1],
        "s_hat_fro": s_norm, "z_hat_fro": z_norm,
        "s_to_z_ratio": s_norm / z_norm if z_norm > 0 else math.inf,
    })
    log.info("denoised %s in %d iterations -> %s", args.input, res.solver.iters_run, out)
    return EXIT_OK


# --------------------------------------------------------------------------
# detect
# --------------------------------------------------------------------------

def cmd_detect(args) -> int:
    if args.detector == "rhyde":
        if not args.s_hat:
            raise ValidationError("--detector rhyde needs --s-hat")
        cube = hsi.load_hsc(args.s_hat)
        scores = detect.rhyde_scores(hsi.cube_to_matrix(cube))
    else:
        if not args.input:
            raise ValidationError("--detector rx needs --input")
        cube = hsi.load_hsc(args.input)
        scores = detect.global_rx(hsi.cube_to_matrix(cube))
    out = _out_dir(args)
    with open(out / "scores.csv", "w") as fh:
        fh.write("row,col,score\n")
        for i, s in enumerate(scores):
            fh.write(f"{i // cube.cols},{i % cube.cols},{_fmt(float(s))}\n")
    if args.mask:
        truth = hsi.load_mask_csv(args.mask, cube.rows, cube.cols)
        roc = detect.roc_curve(scores, truth)
        with open(out / "roc.csv", "w") as fh:
            fh.write("threshold,fa_rate,det_rate\n")
            for t, fa, dr in zip(roc.thresholds, roc.fa_rate, roc.det_rate):
                fh.write(f"{_fmt(float(t))},{_fmt(float(fa))},{_fmt(float(dr))}\n")
        summary = f"auc={roc.auc:.6f} min_fa_at_full_det={roc.min_fa_at_full_detection:.6f}"
        (out / "summary.txt").write_text(summary + "\n")
        print(summary)
    return EXIT_OK


# --------------------------------------------------------------------------
# evaluate / inspect
# --------------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    clean = hsi.load_hsc(args.clean)
    est = hsi.load_hsc(args.estimate)
    if clean.shape != est.shape:
        raise ValidationError(f"shape mismatch: clean {clean.shape} vs estimate {est.shape}")
    a = hsi.cube_to_matrix(clean).astype(np.float64)
    b = hsi.cube_to_matrix(est).astype(np.float64)
    rep = metrics.quality_report(a, b, (clean.rows, clean.cols), peak=args.peak)
    out = _out_dir(args)
    with open(out / "quality.csv", "w") as fh:
        fh.write("band,psnr_db,ssim\n")
        for k, (p, s) in enumerate(zip(rep.per_band_psnr, rep.per_band_ssim)):
            fh.write(f"{k},{_fmt(float(p))},{_fmt(float(s))}\n")
        fh.write(f"mpsnr,{_fmt(rep.mpsnr)},\n")
        fh.write(f"psnr3d_db,{_fmt(rep.psnr_3d)},\n")
        fh.write(f"mssim,{_fmt(rep.mssim)},\n")
        fh.write(f"msam_deg,{_fmt(rep.msam)},\n")
    log.info("mpsnr=%s mssim=%.4f msam=%.3f", _fmt(rep.mpsnr), rep.mssim, rep.msam)
    return EXIT_OK


def cmd_inspect(args) -> int:
    rows, cols, bands = hsi.read_hsc_header(args.input)
    print(f"{args.input}: rows={rows} cols={cols} bands={bands} dtype=f32")
    y = hsi.cube_to_matrix(hsi.load_hsc(args.input)).astype(np.float64)
    _, s = left_singular(y)
    s = s[: min(y.shape)]
    energy = s ** 2
    frac = np.cumsum(energy) / energy.sum() if energy.sum() > 0 else np.zeros_like(energy)
    out = _out_dir(args)
    with open(out / "singular_values.csv", "w") as fh:
        fh.write("index,value,cumulative_energy_fraction\n")
        for k, (v, f) in enumerate(zip(s, frac), 1):
            fh.write(f"{k},{_fmt(float(v))},{_fmt(float(f))}\n")
    for k, (v, f) in enumerate(zip(s[:args.show], frac[:args.show]), 1):
        print(f"  sigma_{k:<3d} {v:14.6g}  cumulative energy {f:.8f}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="RNG seed (default 0)")
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help="output directory (default .)")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="rhyde", parents=[common], description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="write a semi-real test scene")
    p.add_argument("--rows", type=int, default=100)
    p.add_argument("--cols", type=int, default=100)
    p.add_argument("--bands", type=int, default=50)
    p.add_argument("--p-true", type=int, default=5)
    p.add_argument("--implant-rate", type=float, default=0.0002)
    p.add_argument("--noise-u", type=float, default=0.065)
    p.add_argument("--anomaly-scale", type=float, default=1.0,
                   help="anomaly norm relative to the median background pixel norm")
    p.add_argument("--anomaly-spectrum", help="CSV/text file with n_b values")
    p.add_argument("--smoothness", type=float, default=4.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("denoise", parents=[common], help="run RhyDe on an HSC cube")
    p.add_argument("--config", help="key=value file; explicit flags take precedence")
    p.add_argument("--input", required=True)
    p.add_argument("--subspace-dim", type=int)
    p.add_argument("--mu1", type=float, default=1.0)
    p.add_argument("--mu2", type=float, default=1.0)
    p.add_argument("--mu3", type=float, default=1.0)
    p.add_argument("--p-value", type=float, default=1e-2)
    p.add_argument("--lambda2", type=float, help="overrides the p-value rule")
    p.add_argument("--max-iters", type=int, default=30)
    p.add_argument("--rel-tol", type=float, default=1e-3)
    p.add_argument("--denoiser", choices=sorted(REGISTRY), default="collab")
    p.add_argument("--denoiser-opt", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--noise-cov", help="noise model file (HSN1) to use instead of estimating")
    p.add_argument("--noise-structure", choices=noise.NOISE_STRUCTURES, default="diagonal")
    p.add_argument("--assume-white", action="store_true", help="skip noise estimation and whitening")
    p.add_argument("--save-noise-cov", action="store_true", help="write the noise model to noise_cov.hsn")
    p.add_argument("--anscombe", action="store_true")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("detect", parents=[common], help="score pixels and optionally build a ROC")
    p.add_argument("--detector", choices=("rhyde", "rx"), default="rhyde")
    p.add_argument("--s-hat", help="outlier cube written by 'denoise'")
    p.add_argument("--input", help="image cube (for rx)")
    p.add_argument("--mask", help="ground-truth mask CSV")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", parents=[common], help="quality metrics of an estimate")
    p.add_argument("--clean", required=True)
    p.add_argument("--estimate", required=True)
    p.add_argument("--peak", type=float, help="global PSNR peak (default: per-band clean maximum)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect", parents=[common], help="print header and singular values")
    p.add_argument("--input", required=True)
    p.add_argument("--show", type=int, default=10)
    p.set_defaults(func=cmd_inspect)
    return parser


_CONFIG_TYPES = {
    "subspace_dim": int, "max_iters": int, "mu1": float, "mu2": float, "mu3": float,
    "p_value": float, "lambda2": float, "rel_tol": float, "denoiser": str,
    "noise_structure": str, "noise_cov": str,
}


def _apply_config(parser: argparse.ArgumentParser, argv) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = read_key_values(known.config)
    defaults = {}
    for key, raw in cfg.items():
        if key not in _CONFIG_TYPES:
            raise ValidationError(f"{known.config}: unknown key {key!r}")
        try:
            defaults[key] = _CONFIG_TYPES[key](raw)
        except ValueError:
            raise ValidationError(f"{known.config}: bad value for {key}: {raw!r}") from None
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sub.choices["denoise"].set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (ValidationError, OSError) as exc:
        print(f"rhyde: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.seed = getattr(args, "seed", 0)
    args.out_dir = getattr(args, "out_dir", ".")
    args.quiet = getattr(args, "quiet", False)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"rhyde: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, RhydeError) as exc:
        if isinstance(exc, ValidationError):
            print(f"rhyde: invalid input: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"rhyde: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"rhyde: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
