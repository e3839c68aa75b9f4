import argparse
import logging
import math
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from geocover.config import Settings, get_settings
from geocover.errors import DomainError, GeoCoverError, SurfaceMismatchError
from geocover.models.schemas import (
    GeodesicCover,
    OutputFormat,
    PointKind,
    RunConfig,
    Surface,
    SurfaceKind,
    UhpPoint,
)
from geocover.service import export
from geocover.service import hyperbolic as hyp
from geocover.service.analytics import AnalyticsService
from geocover.service.cover import CoverService
from geocover.service.fuchsian import FuchsianService
from geocover.service.sampling import PointSampler

logger = logging.getLogger("geocover")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_ERROR = 2

# flag -> Settings field
TOLERANCE_FLAGS = {
    "eps": "eps_eq",
    "boundary_tol": "boundary_tol",
    "dedup_tol": "dedup_tol",
    "verify_tol": "verify_gap_tol",
    "genus_verify_tol": "genus_verify_gap_tol",
    "oracle_inflate": "oracle_inflate",
    "threads": "threads",
    "log_level": "log_level",
}


class Services:
    """Service graph sharing one Settings instance and its caches."""

    def __init__(self, settings: Settings):
        self.settings = settings
        self.fuchsian = FuchsianService(settings)
        self.sampler = PointSampler(settings, self.fuchsian)
        self.covers = CoverService(settings, self.fuchsian, self.sampler)
        self.analytics = AnalyticsService(settings, self.covers)


def parse_point(text: str) -> UhpPoint:
    try:
        x, y = (float(part) for part in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected x,y but got {text!r}") from exc
    if y <= 0:
        raise argparse.ArgumentTypeError(f"point {text!r} is not in the upper half-plane")
    return UhpPoint(x=x, y=y)


def parse_int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="Seed for every random draw")
    common.add_argument("--out", default=None, help="Output file (stdout when omitted)")
    common.add_argument("--format", choices=[f.value for f in OutputFormat], default=None, help="Output format")
    common.add_argument("--threads", type=int, default=None, help="Worker processes (GEOCOVER_THREADS fallback)")
    common.add_argument("--eps", type=float, default=None, help="Distance clustering tolerance")
    common.add_argument("--boundary-tol", type=float, default=None, help="Fundamental domain boundary band")
    common.add_argument("--dedup-tol", type=float, default=None, help="Float ball dedup grid")
    common.add_argument("--verify-tol", type=float, default=None, help="Modular verification tolerance")
    common.add_argument("--genus-verify-tol", type=float, default=None, help="Genus verification tolerance")
    common.add_argument("--oracle-inflate", type=float, default=None, help="Oracle ball norm^2 inflation")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="geocover", description="Geodesic covers and distinct distances on hyperbolic surfaces")
    sub = parser.add_subparsers(dest="command", required=True)

    cover = sub.add_parser("cover", help="Build or verify geodesic covers")
    cover_sub = cover.add_subparsers(dest="action", required=True)
    build = cover_sub.add_parser("build", parents=[common], help="Build a cover file")
    build.add_argument("--surface", required=True, help="modular or genus:g")
    verify = cover_sub.add_parser("verify", parents=[common], help="Check a cover against the brute-force oracle")
    verify.add_argument("--cover", required=True, help="Cover JSON file")
    verify.add_argument("--samples", type=int, default=1000, help="Number of sampled point pairs")

    dist = sub.add_parser("dist", parents=[common], help="Surface distance of two points")
    dist.add_argument("--surface", required=True)
    dist.add_argument("--cover", default=None, help="Cover JSON file (default cover when omitted)")
    dist.add_argument("--p", type=parse_point, required=True, help="x,y")
    dist.add_argument("--q", type=parse_point, required=True, help="x,y")

    analyze = sub.add_parser("analyze", parents=[common], help="Distinct-distance statistics of a point set")
    analyze.add_argument("--points", required=True, help="Point set JSON file")
    analyze.add_argument("--cover", default=None, help="Cover JSON file (default cover when omitted)")
    analyze.add_argument("--against", default=None, help="Second point set for cross statistics")
    analyze.add_argument("--lifted", action="store_true", help="Also report the lifted plane set")

    latcount = sub.add_parser("latcount", parents=[common], help="Lattice point counts N(R)")
    latcount.add_argument("--surface", required=True)
    latcount.add_argument("--rmax", type=float, required=True)
    latcount.add_argument("--rmin", type=float, default=math.sqrt(2.0))
    latcount.add_argument("--steps", type=int, default=10)

    equilateral = sub.add_parser("equilateral", parents=[common], help="Greedy equilateral packing")
    equilateral.add_argument("--genus", type=int, required=True)
    equilateral.add_argument("--r", default="edge", help="Target distance, or 'edge' for the edge radius")
    equilateral.add_argument("--attempts", type=int, default=3)

    points = sub.add_parser("points", parents=[common], help="Generate a point set file")
    points.add_argument("--kind", choices=[k.value for k in PointKind], required=True)
    points.add_argument("--surface", required=True)
    points.add_argument("--count", type=int, required=True)
    points.add_argument("--h", type=float, default=math.log(2.0), help="Spacing of a geodesic progression")
    points.add_argument("--z0", type=parse_point, default=None, help="Base point of an orbit sample")
    points.add_argument("--cover", default=None, help="Cover whose elements drive an orbit sample")

    qp = sub.add_parser("qp", parents=[common], help="Quadruple count scaling table")
    qp.add_argument("--n", type=parse_int_list, default=[100, 200, 400, 800])

    growth = sub.add_parser("covergrowth", parents=[common], help="Cover size against genus")
    growth.add_argument("--genus", type=parse_int_list, default=[2, 3])
    return parser


def settings_from_args(args: argparse.Namespace) -> Settings:
    overrides: Dict[str, object] = {}
    for flag, field in TOLERANCE_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    return get_settings(**overrides)


def run_config(args: argparse.Namespace, settings: Settings, fmt: OutputFormat) -> RunConfig:
    command = args.command if args.command != "cover" else f"cover {args.action}"
    return RunConfig(
        command=command,
        surface=getattr(args, "surface", None),
        seed=args.seed,
        output_path=args.out,
        format=fmt,
        overrides=settings.overrides(),
    )


def _provenance(config: RunConfig) -> Dict[str, object]:
    data = {"command": config.command, "seed": config.seed}
    if config.surface:
        data["surface"] = config.surface
    data.update(config.overrides)
    return data


def _default_cover(svc: Services, surface: Surface) -> Optional[GeodesicCover]:
    if surface.kind == SurfaceKind.PLANE:
        return None
    if surface.kind == SurfaceKind.MODULAR:
        return svc.covers.modular_cover_paper()
    return svc.covers.build_cover_genus(surface.genus)


def _cover_for(svc: Services, surface: Surface, path: Optional[str]) -> Optional[GeodesicCover]:
    if path is None:
        return _default_cover(svc, surface)
    cover = export.load_cover(path)
    if cover.surface != surface:
        raise SurfaceMismatchError(f"cover file {path} is for {cover.surface.label}, not {surface.label}")
    return cover


def cmd_cover_build(args, svc: Services, config: RunConfig) -> int:
    surface = Surface.parse(args.surface)
    if surface.kind == SurfaceKind.MODULAR:
        cover = svc.covers.modular_cover_paper()
    elif surface.kind == SurfaceKind.GENUS:
        cover = svc.covers.build_cover_genus(surface.genus)
    else:
        raise DomainError("the plane needs no geodesic cover")
    export.save_cover(cover, args.out)
    summary = f"|gamma0| = {cover.size}"
    if cover.bound_used is not None:
        summary += f", normsq_cap = {export.format_float(cover.bound_used.normsq_cap)}"
    print(summary, file=sys.stderr if args.out is None else sys.stdout)
    return EXIT_OK


def cmd_cover_verify(args, svc: Services, config: RunConfig) -> int:
    cover = export.load_cover(args.cover)
    report = svc.covers.verify_cover(cover, args.samples, args.seed)
    data = export.to_data(report)
    data["passed"] = report.passed
    data["provenance"] = _provenance(config)
    export.emit(export.dumps(data), args.out)
    if not report.passed:
        worst = report.worst_pair
        print(
            f"verification failed: max gap {export.format_float(report.max_abs_gap)} at "
            f"p=({worst.p.x}, {worst.p.y}) q=({worst.q.x}, {worst.q.y})",
            file=sys.stderr,
        )
        return EXIT_FAILED
    return EXIT_OK


def cmd_dist(args, svc: Services, config: RunConfig) -> int:
    surface = Surface.parse(args.surface)
    if surface.kind == SurfaceKind.PLANE:
        data = {"distance": hyp.distance_uhp(args.p, args.q), "argmin": [[1, 0], [0, 1]], "ties": []}
    else:
        grp = svc.fuchsian.group_for(surface)
        cover = _cover_for(svc, surface, args.cover)
        p = svc.fuchsian.reduce_to_fundamental(args.p, grp)[0]
        q = svc.fuchsian.reduce_to_fundamental(args.q, grp)[0]
        result = svc.covers.surface_distance_with_argmin(p, q, cover)
        data = export.to_data(result)
        data["p"] = export.to_data(p)
        data["q"] = export.to_data(q)
    data["provenance"] = _provenance(config)
    export.emit(export.dumps(data), args.out)
    return EXIT_OK


def cmd_analyze(args, svc: Services, config: RunConfig) -> int:
    points = export.load_point_set(args.points)
    cover = _cover_for(svc, points.surface, args.cover)
    stats = svc.analytics.distance_stats(points, cover, args.eps)
    results = {"stats": stats}
    if args.against:
        other = export.load_point_set(args.against)
        results["cross"] = svc.analytics.cross_stats(points, other, cover, args.eps)
    if args.lifted and cover is not None:
        results["lifted"] = svc.analytics.lifted_stats(points, cover, args.eps)

    if config.format == OutputFormat.CSV:
        row = {
            "n": stats.n,
            "m": stats.m,
            "Q": stats.quadruples,
            "cs_lower_bound": stats.cs_lower_bound,
            "thm_bound": stats.thm_bound,
        }
        if "cross" in results:
            row["m_cross"] = results["cross"].m_cross
            row["Q_cross"] = results["cross"].quadruples_cross
            row["cross_bound"] = results["cross"].bound
        if "lifted" in results:
            row["lifted_size"] = results["lifted"].lifted_size
            row["Q_lifted"] = results["lifted"].lifted_quadruples
        provenance = _provenance(config)
        provenance["label"] = points.label
        provenance["bounds"] = "shape-only"
        export.write_csv([row], args.out, provenance)
    else:
        data = export.to_data(results)
        data["provenance"] = _provenance(config)
        export.emit(export.dumps(data), args.out)
    return EXIT_OK


def cmd_latcount(args, svc: Services, config: RunConfig) -> int:
    if args.steps < 1:
        raise DomainError("--steps must be at least 1")
    if args.rmax < args.rmin:
        raise DomainError("--rmax must not be below --rmin")
    grp = svc.fuchsian.group_for(Surface.parse(args.surface))
    radii = [args.rmax] if args.steps == 1 else np.linspace(args.rmin, args.rmax, args.steps).tolist()
    rows = svc.fuchsian.lattice_count_table(grp, radii)
    _write_table(rows, args, config)
    return EXIT_OK


def cmd_equilateral(args, svc: Services, config: RunConfig) -> int:
    if args.r == "edge":
        r = svc.fuchsian.build_regular_genus(args.genus).polygon.edge_radius
    else:
        r = float(args.r)
    report = svc.analytics.equilateral_greedy(args.genus, r, args.attempts, args.seed)
    data = export.to_data(report)
    data["provenance"] = _provenance(config)
    export.emit(export.dumps(data), args.out)
    return EXIT_OK


def cmd_points(args, svc: Services, config: RunConfig) -> int:
    surface = Surface.parse(args.surface)
    elements = None
    if args.cover:
        elements = _cover_for(svc, surface, args.cover).gamma0
    points = svc.sampler.generate_points(
        PointKind(args.kind), surface, args.count, args.seed, h=args.h, z0=args.z0, elements=elements,
    )
    export.save_point_set(points, args.out)
    return EXIT_OK


def cmd_qp(args, svc: Services, config: RunConfig) -> int:
    rows = svc.analytics.qp_scaling_experiment(args.n, args.seed)
    _write_table(rows, args, config)
    return EXIT_OK


def cmd_cover_growth(args, svc: Services, config: RunConfig) -> int:
    rows = svc.analytics.cover_growth_table(args.genus)
    _write_table(rows, args, config)
    return EXIT_OK


def _write_table(rows: Sequence, args, config: RunConfig) -> None:
    if config.format == OutputFormat.JSON:
        data = {"rows": export.to_data(list(rows)), "provenance": _provenance(config)}
        export.emit(export.dumps(data), args.out)
    else:
        export.write_csv(rows, args.out, _provenance(config))


COMMANDS = {
    "cover build": cmd_cover_build,
    "cover verify": cmd_cover_verify,
    "dist": cmd_dist,
    "analyze": cmd_analyze,
    "latcount": cmd_latcount,
    "equilateral": cmd_equilateral,
    "points": cmd_points,
    "qp": cmd_qp,
    "covergrowth": cmd_cover_growth,
}
TABLE_COMMANDS = {"latcount", "qp", "covergrowth"}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR

    try:
        settings = settings_from_args(args)
        logging.basicConfig(
            level=getattr(logging, settings.log_level, logging.WARNING),
            stream=sys.stderr,
            format="%(levelname)s %(name)s: %(message)s",
        )
        command = args.command if args.command != "cover" else f"cover {args.action}"
        default_format = OutputFormat.CSV if command in TABLE_COMMANDS else OutputFormat.JSON
        fmt = OutputFormat(args.format) if args.format else default_format
        config = run_config(args, settings, fmt)
        return COMMANDS[command](args, Services(settings), config)
    except (GeoCoverError, ValidationError, OSError, ValueError) as exc:
        print(f"geocover: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
