"""Command-line surface for the D-bar pipeline.

Subcommands: simulate (phantom -> noisy DtN matrix file), reconstruct
(DtN file -> low-pass/enhanced conductivity image), dataset (bulk sample
generation), eval (metrics tables for prediction directories) and bench
(Richardson vs. dense solver timings).  Every run prints its fully resolved
configuration as a JSON line, so identical configurations are auditable.
Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict

import numpy as np

from . import binfmt
from . import dataset as dataset_mod
from . import dbar
from . import forward
from . import phantom as phantom_mod
from . import scattering

EXIT_USAGE = 1
EXIT_RUNTIME = 2

# fixed PNG rendering: jet colormap over the conductivity range [0.3, 2.5]
PNG_CMAP = "jet"
PNG_VRANGE = (0.3, 2.5)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _log_config(args):
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    print(json.dumps({"config": resolved}, default=str))


def _load_phantom_arg(args, parser):
    if args.phantom:
        with open(args.phantom) as fh:
            return phantom_mod.phantom_from_json(fh.read())
    if args.seed is None:
        parser.error("either --seed or --phantom is required")
    if args.style == "kit4":
        return phantom_mod.generate_kit4(args.seed)
    return phantom_mod.generate_act4(args.seed)


def save_png(path, image, vrange=PNG_VRANGE):
    import matplotlib
    matplotlib.use("Agg")
    from matplotlib import image as mpl_image
    mpl_image.imsave(path, image, cmap=PNG_CMAP, vmin=vrange[0], vmax=vrange[1],
                     origin="lower")


def cmd_simulate(args, parser):
    phantom = _load_phantom_arg(args, parser)
    mesh = forward.build_disk_mesh(args.mesh_level)
    R = forward.compute_ntd(mesh, phantom, N=args.patterns)
    R = forward.perturb_ntd(R, args.noise, seed=args.seed or 0)
    L = forward.ntd_to_dtn(R)
    binfmt.write_arrays(args.out, [L])
    if args.save_phantom:
        with open(args.save_phantom, "w") as fh:
            fh.write(phantom_mod.phantom_to_json(phantom))
    print(f"wrote {L.shape[0]}x{L.shape[1]} DtN matrix to {args.out}")
    return 0


def cmd_reconstruct(args, parser):
    arrays = binfmt.read_arrays(args.dtn)
    L = arrays[0].astype(float)
    n_patterns = (L.shape[0] - 1) // 2
    L1 = forward.homogeneous_dtn(n_patterns)
    r_trunc = args.R if args.R is not None else args.Rdelta
    if r_trunc < args.Rdelta:
        parser.error("--R must be >= --Rdelta")
    if r_trunc > args.Rdelta and not args.phantom:
        parser.error("enhancement beyond --Rdelta needs --phantom for the "
                     "asymptotic transform")

    texp = scattering.scattering_texp(
        L, L1, scattering.kpoints(args.Rdelta, args.h), mode=args.mode)
    tasym = None
    if r_trunc > args.Rdelta:
        with open(args.phantom) as fh:
            phantom = phantom_mod.phantom_from_json(fh.read())
        q = phantom_mod.potential_q(phantom)
        tasym = scattering.scattering_tasym(
            q, scattering.kpoints(r_trunc, args.h, r_inner=args.Rdelta))
    grid = dbar.build_kgrid(r_trunc, args.s, args.l)
    field = scattering.assemble_t_field(texp, tasym, args.Rdelta, r_trunc, grid)
    sigma, diag = dbar.reconstruct(field, z_size=args.zgrid, n_iter=args.iters,
                                   solver=args.solver)
    binfmt.write_arrays(args.out, [sigma.values])
    print(f"wrote {args.zgrid}x{args.zgrid} reconstruction to {args.out} "
          f"(max |Im m^2| = {diag.values.max():.2e})")
    if args.png:
        save_png(args.png, sigma.values)
    return 0


def _dataset_meta(args, seed):
    r_lowpass = (args.Rdelta if args.Rdelta is not None
                 else dataset_mod.DELTA_PAIRING[args.noise])
    return dataset_mod.SampleMeta(
        seed=seed, style=args.style, delta=args.noise, r_lowpass=r_lowpass,
        radii=tuple(args.radii), l=args.l, width=args.zgrid, height=args.zgrid,
        mesh_level=args.mesh_level, cgo_mode=args.mode)


def _build_one(meta):
    phantom = dataset_mod.generate_phantom(meta)
    return dataset_mod.make_sample(phantom, meta)


def cmd_dataset(args, parser):
    count = args.count if args.count is not None \
        else dataset_mod.TRAIN_COUNTS[args.style]
    if args.noise not in dataset_mod.DELTA_PAIRING and args.Rdelta is None:
        parser.error(f"--noise {args.noise} has no standard low-pass radius; "
                     "pass --Rdelta")
    os.makedirs(args.out, exist_ok=True)
    metas = [_dataset_meta(args, args.seed0 + i) for i in range(count)]
    records = []
    todo = []
    for idx, meta in enumerate(metas):
        fname = dataset_mod.sample_filename(idx)
        path = os.path.join(args.out, fname)
        if args.resume and os.path.exists(path):
            try:
                binfmt.read_arrays(path)
            except binfmt.FormatError:
                todo.append((idx, meta))
            else:
                records.append((idx, {"file": fname,
                                      "sha256": binfmt.sha256_file(path),
                                      "meta": asdict(meta)}))
                continue
        else:
            todo.append((idx, meta))

    def _emit(idx, sample):
        fname = dataset_mod.sample_filename(idx)
        path = os.path.join(args.out, fname)
        binfmt.write_arrays(path, sample.all_images())
        records.append((idx, {"file": fname,
                              "sha256": binfmt.sha256_file(path),
                              "meta": asdict(sample.meta)}))

    if args.threads > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            for (idx, _), sample in zip(todo, pool.map(
                    _build_one, [m for _, m in todo], chunksize=1)):
                _emit(idx, sample)
                print(f"sample {idx} done", flush=True)
    else:
        for idx, meta in todo:
            _emit(idx, _build_one(meta))
            print(f"sample {idx} done", flush=True)

    records.sort(key=lambda r: r[0])
    binfmt.write_manifest(args.out, [rec for _, rec in records])
    print(f"dataset of {len(records)} samples committed to {args.out}")
    return 0


def cmd_eval(args, parser):
    pred_files = sorted(f for f in os.listdir(args.pred) if f.endswith(".dbar"))
    if not pred_files:
        parser.error(f"no .dbar files in {args.pred}")
    rows = []
    for fname in pred_files:
        gt_path = os.path.join(args.gt, fname)
        if not os.path.exists(gt_path):
            raise FileNotFoundError(f"{fname} missing from {args.gt}")
        pred = binfmt.read_arrays(os.path.join(args.pred, fname))[0]
        gt = binfmt.read_arrays(gt_path)[0]
        rep = dataset_mod.metrics(pred, gt)
        rows.append((fname, rep.psnr, rep.ssim, rep.rmse))
    means = [float(np.mean([r[i] for r in rows])) for i in (1, 2, 3)]
    header = f"{'file':<24} {'psnr':>8} {'ssim':>8} {'rmse':>8}"
    print(header)
    for fname, psnr, ssim, rmse in rows:
        print(f"{fname:<24} {psnr:>8.3f} {ssim:>8.4f} {rmse:>8.4f}")
    print(f"{'mean':<24} {means[0]:>8.3f} {means[1]:>8.4f} {means[2]:>8.4f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["file", "psnr", "ssim", "rmse"])
            writer.writerows(rows)
            writer.writerow(["mean", *means])
    return 0


def cmd_bench(args, parser):
    levels = [int(tok) for tok in args.l.split(",")]
    print(f"{'l':>3} {'solver':<12} {'seconds':>9} {'residual':>12}")
    for l in levels:
        grid = dbar.build_kgrid(R=4.0, s=2.1, l=l)
        K = grid.points()
        vals = np.exp(-np.abs(K - 1.0) ** 2) * (np.abs(K) <= 4.0) * 0.5
        vals[grid.origin_index, grid.origin_index] = 0.0
        field = scattering.ScatteringField(values=vals.astype(complex),
                                           grid=grid, r_truncation=4.0,
                                           r_lowpass=4.0)
        kernel = dbar.spectral_kernel(grid)
        z = 0.3 + 0.2j
        t0 = time.perf_counter()
        m_rich = dbar.richardson_solve(z, field, kernel, args.iters)
        t_rich = time.perf_counter() - t0
        res = dbar.apply_dbar_operator(z, field, kernel, m_rich)
        r_rich = np.linalg.norm(m_rich.values - 1.0 - res.values)
        print(f"{l:>3} {'richardson':<12} {t_rich:>9.4f} {r_rich:>12.3e}")
        if l <= 6:
            t0 = time.perf_counter()
            m_dir = dbar.direct_solve_oracle(z, field)
            t_dir = time.perf_counter() - t0
            res = dbar.apply_dbar_operator(z, field, kernel, m_dir)
            r_dir = np.linalg.norm(m_dir.values - 1.0 - res.values)
            print(f"{l:>3} {'direct':<12} {t_dir:>9.4f} {r_dir:>12.3e}")
        else:
            print(f"{l:>3} {'direct':<12} {'skipped':>9} {'(l > 6)':>12}")
    return 0


def build_parser():
    parser = _Parser(prog="dbar-eit",
                     description="Regularized D-bar EIT pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="phantom -> noisy DtN matrix file")
    p.add_argument("--style", choices=("kit4", "act4"), default="kit4")
    p.add_argument("--seed", type=int)
    p.add_argument("--phantom", help="phantom JSON file instead of --seed")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--patterns", type=int, default=16)
    p.add_argument("--mesh-level", type=int, default=3)
    p.add_argument("--out", default="dtn.dbar")
    p.add_argument("--save-phantom")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="DtN file -> conductivity image")
    p.add_argument("dtn", help="DtN matrix file from simulate")
    p.add_argument("--Rdelta", type=float, default=4.0)
    p.add_argument("--R", type=float, default=None)
    p.add_argument("--h", type=float, default=0.2)
    p.add_argument("--mode", choices=("full", "born"), default="full")
    p.add_argument("--l", type=int, default=7)
    p.add_argument("--s", type=float, default=2.1)
    p.add_argument("--iters", type=int, default=5)
    p.add_argument("--zgrid", type=int, default=64)
    p.add_argument("--solver", choices=("richardson", "direct"),
                   default="richardson")
    p.add_argument("--phantom", help="phantom JSON (needed when R > Rdelta)")
    p.add_argument("--out", default="sigma.dbar")
    p.add_argument("--png")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("dataset", help="generate a sample dataset")
    p.add_argument("--style", choices=("kit4", "act4"), default="kit4")
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--noise", type=float, default=0.0075)
    p.add_argument("--Rdelta", type=float, default=None)
    p.add_argument("--radii", type=float, nargs="+", default=[6.0, 7.0, 8.0])
    p.add_argument("--l", type=int, default=7)
    p.add_argument("--zgrid", type=int, default=128)
    p.add_argument("--mesh-level", type=int, default=3)
    p.add_argument("--mode", choices=("full", "born"), default="full")
    p.add_argument("--seed0", type=int, default=0)
    p.add_argument("--out", default=os.environ.get("DBAR_DATA_DIR", "dataset"))
    p.add_argument("--resume", action="store_true")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("eval", help="metrics for prediction vs ground truth dirs")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="Richardson vs direct solver timings")
    p.add_argument("--l", default="5,6")
    p.add_argument("--iters", type=int, default=5)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _log_config(args)
    try:
        return args.func(args, parser)
    except (binfmt.FormatError, dataset_mod.PipelineError, dbar.ResourceGuardError,
            dbar.DivergenceError, scattering.IllConditionedBIEError,
            scattering.CoverageError, forward.SingularSystemError,
            phantom_mod.GenerationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
