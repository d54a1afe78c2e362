"""Command-line front end.

Subcommands: geometry, simulate, reconstruct, phase-diagram, rip, benchmark,
selftest.  Configuration comes from an INI-style file (sections of
``key = value`` pairs) overridable by flags; flags win.  Every run writes a
JSON manifest (config + master seed + content hash) sufficient to reproduce
it.

Exit codes: 0 success, 1 I/O error, 2 model/aliasing error, 3 config
mismatch, 4 solver did not converge.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import experiments, imageio
from .geometry import (
    AliasingError,
    CoreLayout,
    compute_visibilities,
    default_geometry_grid,
    fermat_spiral_layout,
    integer_grid_layout,
)
from .operators import make_sensing_op
from .physics import NoiseKind, NoiseModel
from .recon import BpdnProblem, SolveStatus, solve_bpdn_l1

EXIT_OK = 0
EXIT_IO = 1
EXIT_MODEL = 2
EXIT_CONFIG = 3
EXIT_NOT_CONVERGED = 4


@dataclass
class RunConfig:
    """Flat run configuration; the manifest stores it verbatim."""

    # layout / physics
    layout: str = "fermat"          # fermat | grid | file:PATH
    Q: int = 32
    grid_side: int = 2              # cores per side for --layout grid
    D: float = experiments.DEFAULT_FIBER_DIAMETER
    wavelength: float = experiments.DEFAULT_WAVELENGTH
    z: float = experiments.DEFAULT_DISTANCE
    # image grid
    n: int = 32
    margin: float = 2.0
    vignette_sigma: float = 0.0     # meters; 0 means fov/4
    # sensing
    M: int = 100
    distribution: str = "gaussian"
    noise: str = "none"
    photon_scale: float = 1e4
    sigma: float = 0.0
    # solver
    epsilon: float = 0.0
    basis: str = "identity"
    max_iters: int = 3000
    # experiment sweeps (comma-separated integer lists)
    K_list: str = "2,4,6,8,10"
    M_list: str = "25,50,100,200,400"
    k_list: str = "5"
    trials: int = 50
    samples: int = 500
    success_threshold: float = 1e-3
    workers: int = 1
    # reproducibility
    seed: int = 0

    _SECTIONS = {
        "layout": ("layout", "Q", "grid_side", "D", "wavelength", "z"),
        "grid": ("n", "margin", "vignette_sigma"),
        "sensing": ("M", "distribution", "noise", "photon_scale", "sigma"),
        "solver": ("epsilon", "basis", "max_iters"),
        "experiment": ("K_list", "M_list", "k_list", "trials", "samples",
                       "success_threshold", "workers"),
        "run": ("seed",),
    }

    @classmethod
    def from_file(cls, path):
        parser = configparser.ConfigParser()
        parser.optionxform = str  # keys are case-sensitive (K_list vs k_list)
        if not parser.read(path):
            raise FileNotFoundError(path)
        known = {f.name: f.type for f in fields(cls) if not f.name.startswith("_")}
        values = {}
        for section in parser.sections():
            if section not in cls._SECTIONS:
                raise ValueError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in cls._SECTIONS[section]:
                    raise ValueError(f"unknown key '{key}' in section [{section}]")
                values[key] = raw
        cfg = cls()
        for key, raw in values.items():
            setattr(cfg, key, _coerce(getattr(cfg, key), raw))
        return cfg

    def apply_flags(self, args):
        for f in fields(self):
            if f.name.startswith("_"):
                continue
            val = getattr(args, f.name, None)
            if val is not None:
                setattr(self, f.name, val)

    def as_dict(self):
        return {k: v for k, v in asdict(self).items() if not k.startswith("_")}


def _coerce(default, raw):
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def _int_list(text):
    return [int(tok) for tok in str(text).split(",") if tok.strip()]


def build_layout_from_config(cfg):
    spec = cfg.layout
    if spec == "fermat":
        return fermat_spiral_layout(cfg.Q, cfg.D, cfg.wavelength, cfg.z)
    if spec == "grid":
        return integer_grid_layout(cfg.grid_side, cfg.D / max(cfg.grid_side, 1),
                                   cfg.wavelength, cfg.z)
    if spec.startswith("file:"):
        return CoreLayout.from_csv(spec[5:], cfg.D, cfg.wavelength, cfg.z)
    raise ValueError(f"unknown layout spec: {spec}")


def grid_from_config(cfg, layout):
    grid = experiments.grid_for_layout(layout, cfg.n, cfg.margin)
    if cfg.vignette_sigma > 0:
        from .geometry import ImageGrid
        grid = ImageGrid(grid.n, grid.fov, cfg.vignette_sigma)
    return grid


def _noise_from_config(cfg):
    kind = NoiseKind(cfg.noise)
    if kind is NoiseKind.POISSON:
        return NoiseModel(kind, photon_scale=cfg.photon_scale)
    if kind is NoiseKind.ADDITIVE_GAUSSIAN:
        return NoiseModel(kind, sigma=cfg.sigma)
    return NoiseModel()


def _load_image(path):
    if path.endswith(".pgm"):
        return imageio.read_pgm(path)
    return imageio.read_image_csv(path)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_geometry(cfg, args):
    layout = build_layout_from_config(cfg)
    if args.default_grid:
        grid = default_geometry_grid(layout, cfg.margin)
    else:
        grid = grid_from_config(cfg, layout)
    vis = compute_visibilities(layout, grid)
    hist = {}
    for count in vis.multiplicity.values():
        hist[count] = hist.get(count, 0) + 1
    print(f"Q = {layout.Q}")
    print(f"grid side n = {grid.n}")
    print(f"distinct visibilities = {vis.distinct_count}")
    print(f"Q(Q-1)+1 = {layout.Q * (layout.Q - 1) + 1}")
    print("multiplicity histogram (count: bins):")
    for count in sorted(hist):
        print(f"  {count}: {hist[count]}")
    if args.out_layout:
        layout.to_csv(args.out_layout)
    if args.out_coverage:
        side = min(grid.n, 512)
        cover = np.zeros((side, side))
        for (bx, by), count in vis.multiplicity.items():
            a = int((bx + grid.n // 2) * side / grid.n)
            b = int((by + grid.n // 2) * side / grid.n)
            cover[min(a, side - 1), min(b, side - 1)] += count
        imageio.write_pgm(args.out_coverage, np.log1p(cover))
    return EXIT_OK


def cmd_simulate(cfg, args):
    if not os.path.exists(args.image):
        print(f"input image not found: {args.image}", file=sys.stderr)
        return EXIT_IO
    f = _load_image(args.image)
    cfg.n = f.shape[0]
    layout = build_layout_from_config(cfg)
    grid = grid_from_config(cfg, layout)
    op = make_sensing_op(layout, grid, M=cfg.M, distribution=cfg.distribution,
                         seed=cfg.seed)
    clean = op.apply(f)
    noise = _noise_from_config(cfg)
    rng = np.random.default_rng(cfg.seed)
    y = noise.corrupt(clean, rng)
    imageio.write_measurements_csv(args.out, y)
    imageio.write_manifest(args.out + ".manifest.json", cfg.as_dict(), cfg.seed,
                           extra={"image": os.path.abspath(args.image)})
    print(f"wrote {len(y)} measurements to {args.out}")
    return EXIT_OK


def cmd_reconstruct(cfg, args):
    if not os.path.exists(args.measurements):
        print(f"measurement file not found: {args.measurements}", file=sys.stderr)
        return EXIT_IO
    manifest_path = args.manifest or args.measurements + ".manifest.json"
    if not os.path.exists(manifest_path):
        print(f"manifest not found: {manifest_path}", file=sys.stderr)
        return EXIT_IO
    try:
        manifest = imageio.read_manifest(manifest_path)
        stored = manifest["config"]
        if imageio.config_hash(stored) != manifest.get("content_hash"):
            print("manifest content hash mismatch", file=sys.stderr)
            return EXIT_CONFIG
    except (json.JSONDecodeError, KeyError, TypeError):
        print("manifest is corrupted", file=sys.stderr)
        return EXIT_CONFIG
    # solver settings may be overridden; the sensing chain comes from the manifest
    for key in ("layout", "Q", "grid_side", "D", "wavelength", "z", "n",
                "margin", "vignette_sigma", "M", "distribution"):
        setattr(cfg, key, stored[key])
    y = imageio.read_measurements_csv(args.measurements)
    if len(y) != cfg.M:
        print("measurement count does not match the manifest", file=sys.stderr)
        return EXIT_CONFIG
    layout = build_layout_from_config(cfg)
    grid = grid_from_config(cfg, layout)
    op = make_sensing_op(layout, grid, M=cfg.M, distribution=cfg.distribution,
                         seed=manifest["seed"])
    result = solve_bpdn_l1(BpdnProblem(op, y, epsilon=cfg.epsilon,
                                       sparsity_basis=cfg.basis,
                                       max_iters=cfg.max_iters))
    imageio.write_pgm(args.out, result.estimate)
    metrics = {
        "status": result.status.value,
        "iterations": result.iterations,
        "primal_residual": result.primal_residual,
        "fidelity_value": result.fidelity_value,
        "objective": result.objective,
        "config_hash": imageio.config_hash(stored),
    }
    with open(args.out + ".metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"status: {result.status.value} after {result.iterations} iterations")
    return EXIT_OK if result.status is SolveStatus.CONVERGED else EXIT_NOT_CONVERGED


def cmd_phase_diagram(cfg, args):
    K_list, M_list = _int_list(cfg.K_list), _int_list(cfg.M_list)
    cells = [(M, K) for K in K_list for M in M_list]
    if args.dry_run:
        for M, K in cells:
            print(f"cell M={M} K={K} trials={cfg.trials}")
        return EXIT_OK
    done = {}
    if args.resume and os.path.exists(args.out):
        for row in experiments.read_table_csv(args.out):
            key = (int(row["M"]), int(row["K"]))
            done[key] = {
                "M": int(row["M"]), "Q": int(row["Q"]), "K": int(row["K"]),
                "trials": int(row["trials"]), "successes": int(row["successes"]),
                "median_error": float(row["median_error"]),
            }
    rows = experiments.run_phase_diagram(
        cfg.n, cfg.Q, K_list, M_list, cfg.trials, master_seed=cfg.seed,
        noise=cfg.noise, success_threshold=cfg.success_threshold,
        max_iters=cfg.max_iters, workers=cfg.workers, done_cells=done,
    )
    experiments.write_table_csv(args.out, rows)
    imageio.write_manifest(args.out + ".manifest.json", cfg.as_dict(), cfg.seed)
    for row in rows:
        print(f"M={row['M']:>6} K={row['K']:>3} success="
              f"{row['successes']}/{row['trials']} median_err={row['median_error']:.2e}")
    return EXIT_OK


def cmd_rip(cfg, args):
    reports = experiments.run_rip_study(
        cfg.n, _int_list(cfg.k_list), _int_list(cfg.M_list),
        samples=cfg.samples, seed=cfg.seed,
    )
    rows = [{
        "k": r.k, "M": r.M, "samples": r.samples,
        "m_k": r.m_k, "M_k": r.M_k, "spread": r.spread,
    } for r in reports]
    experiments.write_table_csv(args.out, rows)
    imageio.write_manifest(args.out + ".manifest.json", cfg.as_dict(), cfg.seed)
    for row in rows:
        print(f"k={row['k']} M={row['M']}: m_k={row['m_k']:.4f} "
              f"M_k={row['M_k']:.4f} spread={row['spread']:.4f}")
    return EXIT_OK


def cmd_benchmark(cfg, args):
    out = experiments.run_benchmark_figure(
        seed=cfg.seed, n=cfg.n, Q=cfg.Q,
        M_pair=tuple(_int_list(cfg.M_list)[:2]) or (49, 20000),
        noise=cfg.noise if cfg.noise != "none" else "poisson",
        photon_scale=cfg.photon_scale, max_iters=cfg.max_iters,
    )
    os.makedirs(args.outdir, exist_ok=True)
    imageio.write_pgm(os.path.join(args.outdir, "phantom.pgm"), out["phantom"])
    metrics = {}
    for M, res in out["results"].items():
        imageio.write_pgm(os.path.join(args.outdir, f"recon_M{M}.pgm"),
                          res["estimate"])
        metrics[str(M)] = {"error": res["error"], "ssim": res["ssim"]}
        print(f"M={M}: rel_error={res['error']:.4f} ssim={res['ssim']:.4f}")
    with open(os.path.join(args.outdir, "metrics.json"), "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    imageio.write_manifest(os.path.join(args.outdir, "manifest.json"),
                           cfg.as_dict(), cfg.seed)
    return EXIT_OK


def cmd_selftest(cfg, args):
    from . import selftest
    failures = selftest.run(verbose=True)
    return EXIT_OK if failures == 0 else EXIT_MODEL


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_config_flags(parser):
    parser.add_argument("--config", help="INI config file; flags override it")
    for f in fields(RunConfig):
        if f.name.startswith("_"):
            continue
        flag = "--" + f.name.replace("_", "-")
        if f.name == "layout":
            parser.add_argument("--layout", help="fermat | grid | file:PATH")
        elif f.name == "grid_side":
            parser.add_argument("--grid-side", "--side", dest="grid_side", type=int)
        elif f.type in ("int", int):
            parser.add_argument(flag, dest=f.name, type=int)
        elif f.type in ("float", float):
            parser.add_argument(flag, dest=f.name, type=float)
        else:
            parser.add_argument(flag, dest=f.name)


def build_parser():
    parser = argparse.ArgumentParser(prog="mcfspi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("geometry", help="layout and visibility report")
    p.add_argument("--default-grid", action="store_true",
                   help="use the uniqueness-calibrated geometry grid")
    p.add_argument("--out-layout", help="write the layout CSV here")
    p.add_argument("--out-coverage", help="write a frequency-coverage PGM here")
    p.set_defaults(func=cmd_geometry)

    p = sub.add_parser("simulate", help="simulate measurements of an image")
    p.add_argument("image", help="input image (PGM or CSV)")
    p.add_argument("--out", default="measurements.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="reconstruct an image from measurements")
    p.add_argument("measurements")
    p.add_argument("--manifest", help="manifest path (default: <measurements>.manifest.json)")
    p.add_argument("--out", default="reconstruction.pgm")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("phase-diagram", help="Monte Carlo success-rate table")
    p.add_argument("--out", default="phase_diagram.csv")
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--resume", action="store_true",
                   help="skip cells already present in the output table")
    p.set_defaults(func=cmd_phase_diagram)

    p = sub.add_parser("rip", help="empirical restricted-isometry concentration")
    p.add_argument("--out", default="rip.csv")
    p.set_defaults(func=cmd_rip)

    p = sub.add_parser("benchmark", help="small-vs-large sketch budget reconstruction pair")
    p.add_argument("--outdir", default="benchmark")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("selftest", help="run the adjoint/oracle check suite")
    p.set_defaults(func=cmd_selftest)

    for p in sub.choices.values():
        _add_config_flags(p)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
        cfg.apply_flags(args)
        return args.func(cfg, args)
    except AliasingError as exc:
        print(f"aliasing error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except FileNotFoundError as exc:
        print(f"file not found: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
