"""Command-line front end: domain specs in, CSV/JSON tables and figures out.

Every run writes a manifest listing its parameters and output files; the
manifest can be replayed with ``cornerheat --replay <manifest>``.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import geometry as geo

log = logging.getLogger("cornerheat")

THREADS_ENV = "CORNERHEAT_THREADS"


class UsageError(ValueError):
    """Invalid parameters; reported with exit status 2."""


@dataclass
class RunManifest:
    subcommand: str
    argv: list
    input: str | None
    parameters: dict
    version: str = __version__
    outputs: list = field(default_factory=list)

    def write(self, out_dir: Path) -> Path:
        from .io import write_json
        path = out_dir / f"{self.subcommand}_manifest.json"
        self.outputs.append(str(path.name))
        write_json(path, asdict(self))
        return path


# ---------------------------------------------------------------------------
# argument helpers

def _positive(x: str) -> float:
    v = float(x)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {x}")
    return v


def _nonneg(x: str) -> float:
    v = float(x)
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {x}")
    return v


def _domain(spec: str):
    if spec in geo.NAMED_DOMAINS:
        return geo.named_domain(spec)
    if not Path(spec).exists():
        raise UsageError(f"--domain: {spec!r} is neither a named domain "
                         f"({', '.join(sorted(geo.NAMED_DOMAINS))}) nor a file")
    return geo.parse_domain(Path(spec))


def _polygon(spec: str) -> geo.PolygonDomain:
    d = _domain(spec)
    if not isinstance(d, geo.PolygonDomain):
        raise UsageError("this subcommand needs a polygon domain")
    return d


def _default_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be at least 1")
    return n


def _figure(args, out: Path, stem: str) -> Path | None:
    if not args.plot:
        return None
    return out / f"{stem}.{args.plot_format}"


# ---------------------------------------------------------------------------
# subcommands

def cmd_spectrum(args, out: Path) -> list:
    from . import fem, mesh, oracle
    d = _domain(args.domain)
    if args.method == "oracle":
        if isinstance(d, geo.SectorDomain):
            spec = oracle.sector_spectrum(d.alpha, d.radius, args.bc, args.lambda_max)
        elif isinstance(d, geo.PolygonDomain):
            from .renorm import polygon_trace_exact
            if polygon_trace_exact(d, 1.0, args.bc) is None:
                raise UsageError("oracle spectra exist for axis-aligned rectangles and sectors only")
            v = d.vertices
            spec = oracle.rectangle_spectrum(float(np.ptp(v[:, 0])), float(np.ptp(v[:, 1])),
                                             args.bc, args.lambda_max)
        else:
            raise UsageError("oracle spectra exist for axis-aligned rectangles and sectors only")
    else:
        if args.h is None:
            raise UsageError("--method fem needs --h")
        m = mesh.triangulate(d, args.h, grading=args.grading)
        spec, _ = fem.solve_mesh(m, args.bc, args.lambda_max, tol=args.tol)
    spec.meta["domain"] = geo.domain_to_dict(d)
    files = spec.save(out / "spectrum.csv")
    print(f"{len(spec)} eigenvalues <= {args.lambda_max:g} ({spec.provenance})")
    return list(files)


def _t_grid(args) -> np.ndarray:
    if args.t:
        return np.array(sorted(args.t))
    if args.t_range:
        lo, hi, n = args.t_range
        n = int(n)
        if not (0 < lo < hi) or n < 2:
            raise UsageError("--t-range needs 0 < t_min < t_max and n >= 2")
        return np.geomspace(lo, hi, n)
    raise UsageError("give --t values or --t-range t_min t_max n")


def cmd_trace(args, out: Path) -> list:
    from .fem import Spectrum
    from .heattrace import trace_from_spectrum
    spec = Spectrum.load(args.spectrum)
    d = _domain(args.domain) if args.domain else geo.parse_domain(spec.meta["domain"]) \
        if "domain" in spec.meta else None
    if d is None:
        raise UsageError("spectrum file carries no domain; pass --domain")
    curve = trace_from_spectrum(spec, _t_grid(args), d)
    curve.meta["domain"] = geo.domain_to_dict(d)
    files = list(curve.save(out / "trace.csv"))
    for t, v, flag in zip(curve.t, curve.values, curve.flagged):
        print(f"t={t:.6g}  trace={v:.15g}{'  (tail flagged)' if flag else ''}")
    return files


def cmd_fit(args, out: Path) -> list:
    from .heattrace import TraceCurve, fit_a2
    from . import plots
    curve = TraceCurve.load(args.trace)
    if args.domain:
        d = _domain(args.domain)
    elif "domain" in curve.meta:
        d = geo.parse_domain(curve.meta["domain"])
    else:
        raise UsageError("trace file carries no domain; pass --domain")
    fit = fit_a2(curve, d, window=args.window, degree=args.degree, pinned=not args.unpinned)
    files = list(fit.save(out / "fit.csv"))
    fig = _figure(args, out, "fit")
    if fig:
        files.append(plots.plot_trace_fit(curve, fit, fig))
    print(f"a0={fit.a0:.12g} a1={fit.a1:.12g} a2={fit.a2:.12g} status={fit.status}")
    return files


def cmd_sector(args, out: Path) -> list:
    from .io import write_csv
    from .sector_kernel import sector_table
    for a in args.alpha:
        if not (0 < a < 2 * math.pi):
            raise UsageError("--alpha values must lie in (0, 2pi)")
    rows = sector_table(args.alpha, args.R)
    rows = [r + (r[2] + r[3] - r[4],) for r in rows]
    path = write_csv(out / "sector.csv", ["R", "alpha", "D_dirichlet", "D_neumann", "cone", "identity_residual"],
                     rows)
    for r in rows:
        print(",".join(repr(float(x)) for x in r))
    return [path]


def _renorm_config(args, taus):
    from .renorm import RenormConfig
    return RenormConfig(taus=tuple(taus), bc=args.bc, h=args.h,
                        error_estimate=not args.no_error_estimate,
                        renormalization=args.renormalization)


def cmd_c2(args, out: Path) -> list:
    from .renorm import DEFAULT_TAUS, c2_curve
    from . import plots
    taus = args.tau or list(DEFAULT_TAUS)
    if min(taus) < 0.02 or max(taus) > 50:
        raise UsageError("tau values must lie in [0.02, 50]")
    poly = _polygon(args.domain)
    cfg = _renorm_config(args, taus)
    workers = args.workers or _default_workers()
    curve = c2_curve(poly, taus, cfg, workers=workers)
    files = list(curve.save(out / "c2.csv"))
    fig = _figure(args, out, "c2")
    if fig:
        files.append(plots.plot_c2(curve, fig))
    print(f"limits: tau->0 {curve.limit0:.6g}, tau->inf {curve.limit_inf:.6g}")
    for t, v, e in zip(curve.taus, curve.values, curve.errors):
        print(f"tau={t:<8g} C2={v:.8f}  +-{e:.2g}")
    return files


def cmd_anomaly(args, out: Path) -> list:
    from .experiments import DEFAULT_ANOMALY_TAUS, anomaly
    from .io import write_csv, write_json
    from . import plots
    poly = _polygon(args.domain)
    cfg = _renorm_config(args, DEFAULT_ANOMALY_TAUS)
    results = anomaly(poly, args.eps, config=cfg, degree=args.degree)
    rows = [(r.eps, r.fit.a2, r.predicted, r.polygon_value, r.fit.status) for r in results]
    files = [write_csv(out / "anomaly.csv", ["eps", "a2_fit", "a2_predicted", "a2_polygon", "status"], rows)]
    files.append(write_json(out / "anomaly.csv.json",
                            {"config": cfg.to_dict(), "fits": [r.fit.to_dict() for r in results]}))
    fig = _figure(args, out, "anomaly")
    if fig:
        files.append(plots.plot_anomaly(results, fig))
    print(f"{'eps':>6}  {'fitted a2':>10}  {'predicted':>10}")
    for e, a2, pred, _, st in rows:
        print(f"{e:>6g}  {a2:>10.6f}  {pred:>10.6f}  {st}")
    return files


def cmd_blowup(args, out: Path) -> list:
    from .heattrace import to_blowup
    from .io import write_csv
    ts, es = args.t, args.eps
    if len(ts) != len(es):
        if len(ts) == 1:
            ts = ts * len(es)
        elif len(es) == 1:
            es = es * len(ts)
        else:
            raise UsageError("--t and --eps need equal lengths or one single value")
    rows = []
    for t, e in zip(ts, es):
        try:
            b = to_blowup(t, e)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        rows.append((b.t, b.eps, b.tau, b.eta, b.face))
        print(f"t={b.t:g} eps={b.eps:g} -> tau={b.tau:g} eta={b.eta:g} face={b.face}")
    return [write_csv(out / "blowup.csv", ["t", "eps", "tau", "eta", "face"], rows)]


COMMANDS = {
    "spectrum": cmd_spectrum, "trace": cmd_trace, "fit": cmd_fit, "sector": cmd_sector,
    "c2": cmd_c2, "anomaly": cmd_anomaly, "blowup": cmd_blowup,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cornerheat", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--replay", metavar="MANIFEST", help="re-run the command recorded in a manifest")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--plot", action="store_true", help="also render figures")
    common.add_argument("--plot-format", choices=("svg", "png", "pdf"), default="svg")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="command")

    s = sub.add_parser("spectrum", parents=[common], help="eigenvalues from an oracle or FEM")
    s.add_argument("--domain", required=True, help="named domain or JSON domain file")
    s.add_argument("--bc", default="dirichlet", choices=("dirichlet", "neumann", "d", "n"))
    s.add_argument("--lambda-max", type=_positive, required=True)
    s.add_argument("--method", choices=("oracle", "fem"), default="oracle")
    s.add_argument("--h", type=_positive, help="FEM mesh size")
    s.add_argument("--grading", type=_positive, default=1.0)
    s.add_argument("--tol", type=_positive, default=1e-9)

    s = sub.add_parser("trace", parents=[common], help="heat trace from a spectrum file")
    s.add_argument("--spectrum", required=True)
    s.add_argument("--domain", help="override the domain stored with the spectrum")
    s.add_argument("--t", type=_positive, nargs="+")
    s.add_argument("--t-range", type=_positive, nargs=3, metavar=("T_MIN", "T_MAX", "N"))

    s = sub.add_parser("fit", parents=[common], help="small-time coefficients from a trace file")
    s.add_argument("--trace", required=True)
    s.add_argument("--domain")
    s.add_argument("--window", type=_positive, nargs=2, metavar=("T_MIN", "T_MAX"))
    s.add_argument("--degree", type=int, choices=(0, 1, 2, 3), default=2)
    s.add_argument("--unpinned", action="store_true", help="fit a0 and a1 too")

    s = sub.add_parser("sector", parents=[common], help="closed-form sector and cone traces")
    s.add_argument("--alpha", type=_positive, nargs="+", required=True)
    s.add_argument("--R", type=_nonneg, nargs="+", required=True)

    for name, helptext in (("c2", "front-face coefficient C2(tau)"),
                           ("anomaly", "fitted a2 of a rounded polygon against eps")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--domain", default="square")
        s.add_argument("--bc", default="dirichlet", choices=("dirichlet", "neumann", "d", "n"))
        s.add_argument("--h", type=_positive, default=0.25, help="bulk mesh size in units of sqrt(tau)")
        s.add_argument("--no-error-estimate", action="store_true", help="skip the coarse-mesh rerun")
        s.add_argument("--renormalization", choices=("geometric", "sector"), default="geometric")
        if name == "c2":
            s.add_argument("--tau", type=_positive, nargs="+")
            s.add_argument("--workers", type=int, help=f"parallel tau points (default ${THREADS_ENV} or 1)")
        else:
            s.add_argument("--eps", type=_nonneg, nargs="+", default=[0.2, 0.1, 0.05, 0.0])
            s.add_argument("--degree", type=int, choices=(1, 2, 3), default=2)

    s = sub.add_parser("blowup", parents=[common], help="projective coordinates of (t, eps)")
    s.add_argument("--t", type=_nonneg, nargs="+", required=True)
    s.add_argument("--eps", type=_nonneg, nargs="+", required=True)
    return p


def run(argv=None) -> int:
    from .io import read_json
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.replay:
        if args.command:
            print("cornerheat: --replay takes no subcommand", file=sys.stderr)
            return 2
        try:
            argv = list(read_json(args.replay)["argv"])
        except (OSError, KeyError, ValueError) as exc:
            print(f"cornerheat: cannot replay {args.replay}: {exc}", file=sys.stderr)
            return 2
        return run(argv)
    if not args.command:
        parser.print_help(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        files = COMMANDS[args.command](args, out)
    except (UsageError, geo.GeometryError, ValueError) as exc:
        print(f"cornerheat {args.command}: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError) as exc:
        print(f"cornerheat {args.command}: {exc}", file=sys.stderr)
        return 1
    params = {k: v for k, v in vars(args).items() if k not in ("replay", "command")}
    man = RunManifest(args.command, argv, getattr(args, "domain", None) or getattr(args, "spectrum", None)
                      or getattr(args, "trace", None), params,
                      outputs=[str(Path(f).name) for f in files])
    man.write(out)
    return 0


def main() -> None:
    sys.exit(run())
