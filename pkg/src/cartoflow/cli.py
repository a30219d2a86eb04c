"""``cartoflow`` command-line front end.

Exit status: 0 when every region is within tolerance, 2 when the iteration
cap was hit (outputs are still written), 1 on bad input and 3 when the
solver itself fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from . import io as cio
from .density import RasterizationError, gaussian_blur, rasterize
from .diffusion import DiffusionOptions
from .flow import IntegrationError, default_workers
from .geometry import (
    AlbersParams,
    GeometryError,
    MapDocument,
    albers_forward,
    albers_inverse,
    normalize_to_box,
    project_equal_area,
)
from .metrics import DistortionReport, report_for
from .projection import DomainError, TopologyError, graticule
from .solver import CartogramResult, SolveOptions, solve_cartogram

log = logging.getLogger("cartoflow")

EXIT_OK, EXIT_INPUT, EXIT_UNCONVERGED, EXIT_SOLVER = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cartoflow",
        description="Contiguous density-equalizing cartograms with the fast flow-based method.",
    )
    inp = p.add_argument_group("input")
    inp.add_argument("--map", required=True, help="GeoJSON FeatureCollection of regions")
    inp.add_argument("--values", required=True, help="CSV with columns id,value[,color]")
    inp.add_argument("--id-field", default="id", help="feature property holding the region id")
    inp.add_argument("--points", help="CSV id,x,y of points to project")
    inp.add_argument("--inverse", action="store_true", help="map --points from the cartogram back to the map")

    sol = p.add_argument_group("solver")
    sol.add_argument("--grid-size", type=int, default=512, help="grid cells per side (default 512)")
    sol.add_argument("--max-area-error", type=float, default=0.01, help="stopping tolerance (default 0.01)")
    sol.add_argument("--max-iterations", type=int, default=16)
    sol.add_argument("--blur-sigma", type=float, help="first-round blur width in cells (default grid/128)")
    sol.add_argument("--algorithm", choices=("fast", "diffusion"), default="fast")
    sol.add_argument("--workers", type=int, help="worker threads (default $CARTOFLOW_WORKERS or CPU count)")

    prj = p.add_argument_group("pre-projection")
    prj.add_argument("--albers", action="store_true", help="input is lon/lat degrees; project with Albers first")
    prj.add_argument("--standard-parallels", type=float, nargs=2, metavar=("LAT1", "LAT2"))
    prj.add_argument("--origin", type=float, nargs=2, metavar=("LAT0", "LON0"))

    out = p.add_argument_group("outputs")
    out.add_argument("--geojson", help="write the cartogram as GeoJSON")
    out.add_argument("--svg", help="write the cartogram as SVG")
    out.add_argument("--graticule", help="write the projected grid lines as GeoJSON")
    out.add_argument("--inverse-graticule", help="write preimages of a regular grid as GeoJSON")
    out.add_argument("--graticule-spacing", type=int, help="grid-line spacing in cells (must divide the grid size)")
    out.add_argument("--points-out", help="projected points CSV (default: stdout)")
    out.add_argument("--metrics", help="write the distortion report as JSON")
    out.add_argument("--density-dump", help="write the first-round density raster")
    out.add_argument("--benchmark", action="store_true", help="run both algorithms and compare")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _albers(args) -> AlbersParams | None:
    if not (args.albers or args.standard_parallels or args.origin):
        return None
    kw = {}
    if args.standard_parallels:
        kw["lat1"], kw["lat2"] = args.standard_parallels
    if args.origin:
        kw["lat0"], kw["lon0"] = args.origin
    return AlbersParams(**kw)


def _validate(args, parser):
    if args.grid_size < 16:
        parser.error("--grid-size must be at least 16")
    if not 0 < args.max_area_error < 1:
        parser.error("--max-area-error must lie in (0, 1)")
    if args.max_iterations < 1:
        parser.error("--max-iterations must be positive")
    if args.blur_sigma is not None and args.blur_sigma < 0:
        parser.error("--blur-sigma must be non-negative")
    if args.graticule_spacing is not None and (
        args.graticule_spacing <= 0 or args.grid_size % args.graticule_spacing
    ):
        parser.error("--graticule-spacing must divide --grid-size")
    if args.workers is not None and args.workers < 1:
        parser.error("--workers must be positive")


def default_spacing(size: int) -> int:
    """Largest divisor of ``size`` not exceeding ``size / 32`` (at least 1)."""
    target = max(1, size // 32)
    return max(d for d in range(1, target + 1) if size % d == 0)


def load_document(args) -> MapDocument:
    with open(args.map, encoding="utf-8") as fh:
        geo = fh.read()
    with open(args.values, encoding="utf-8") as fh:
        values = fh.read()
    doc = cio.parse_input(geo, values, args.id_field)
    doc = project_equal_area(doc, _albers(args))
    return normalize_to_box(doc, args.grid_size)


def solve_options(args, algorithm: str | None = None) -> SolveOptions:
    return SolveOptions(
        max_area_error=args.max_area_error,
        max_iterations=args.max_iterations,
        blur_sigma=args.blur_sigma,
        algorithm=algorithm or args.algorithm,
        workers=args.workers or default_workers(),
        diffusion=DiffusionOptions(),
    )


def project_points(result: CartogramResult, rows, inverse: bool, albers: AlbersParams | None):
    """Map ``(id, x, y)`` rows through the cartogram (or its inverse).

    Points are given in the input frame (lon/lat when Albers is active) for
    the forward map and in the output planar frame for the inverse; rows
    that cannot be mapped keep their input coordinates and are flagged.
    """
    frame = result.projected.frame
    T = result.projection
    if not rows:
        return []
    ids = [r[0] for r in rows]
    pts = np.array([[r[1], r[2]] for r in rows], dtype=float)
    if not inverse and albers is not None:
        pts = np.column_stack(albers_forward(pts[:, 0], pts[:, 1], albers))
    grid_pts = frame.forward(pts)
    inside = T.grid.contains(grid_pts)
    mapped = np.full_like(grid_pts, np.nan)
    if inside.any():
        if inverse:
            mapped[inside] = T.invert(grid_pts[inside], strict=False)
        else:
            mapped[inside] = T.apply(grid_pts[inside])
    out_pts = frame.inverse(mapped)
    if inverse and albers is not None:
        out_pts = np.column_stack(albers_inverse(out_pts[:, 0], out_pts[:, 1], albers))
    out = []
    for k, pid in enumerate(ids):
        if not inside[k] or np.isnan(out_pts[k, 0]):
            out.append((pid, rows[k][1], rows[k][2], "outside domain"))
        else:
            out.append((pid, out_pts[k, 0], out_pts[k, 1], ""))
    return out


def write_outputs(args, result: CartogramResult, report: DistortionReport | None, points_rows) -> None:
    doc = result.projected
    frame = doc.frame
    if args.geojson:
        cio.dump_json(cio.to_geojson(doc, result.region_properties(), denormalize=True), args.geojson)
    if args.svg:
        planar = doc.map_points(frame.inverse)
        pts = None
        # inverse-mapped points live on the original map, not on this drawing
        if points_rows and not args.inverse:
            good = [(x, y) for _, x, y, flag in points_rows if not flag]
            pts = np.array(good, dtype=float).reshape(-1, 2)
        with open(args.svg, "w", encoding="utf-8") as fh:
            fh.write(cio.to_svg(planar, pts))
    spacing = args.graticule_spacing or default_spacing(args.grid_size)
    if args.graticule:
        lines = graticule(result.projection, spacing)
        cio.dump_json(cio.lines_geojson(lines, frame, "graticule"), args.graticule)
    if args.inverse_graticule:
        lines = graticule(result.projection, spacing, inverse=True)
        cio.dump_json(cio.lines_geojson(lines, frame, "inverse graticule"), args.inverse_graticule)
    if args.density_dump:
        density = rasterize(result.original, min_cells=0.0)
        sigma = args.grid_size / 128 if args.blur_sigma is None else args.blur_sigma
        if sigma > 0:
            density = gaussian_blur(density, sigma)
        cio.write_raster(args.density_dump, density.rho0)
    if report is not None and args.metrics:
        with open(args.metrics, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")


def summary_line(result: CartogramResult) -> str:
    worst = max(result.relative_error, key=result.relative_error.get)
    state = "converged" if result.converged else "NOT converged"
    return (
        f"{state} after {result.iterations} iteration(s); "
        f"max area error {100 * result.max_area_error:.6g}% (region {worst}); "
        f"{result.runtime_seconds:.6g} s"
    )


def run_benchmark(args, doc: MapDocument) -> dict:
    rows = {}
    for alg in ("fast", "diffusion"):
        result = solve_cartogram(doc, solve_options(args, alg))
        report = report_for(result)
        rows[alg] = {
            "runtime_seconds": result.runtime_seconds,
            "iterations": result.iterations,
            "converged": result.converged,
            "transforms_per_round": result.transforms_per_round,
            "transforms_executed": sum(result.transforms_per_round),
            "blur_transforms": result.blur_transforms,
            "steps": result.steps,
            "metrics": report.to_dict(),
        }
    rows["time_ratio"] = rows["fast"]["runtime_seconds"] / rows["diffusion"]["runtime_seconds"]
    return rows


def format_benchmark(rows: dict) -> str:
    keys = ["runtime_seconds", "iterations", "transforms_executed", "blur_transforms", "steps"]
    mkeys = list(rows["fast"]["metrics"])
    lines = [f"{'':<20}{'fast':>14}{'diffusion':>14}"]
    for k in keys:
        lines.append(f"{k:<20}{rows['fast'][k]:>14.6g}{rows['diffusion'][k]:>14.6g}")
    for k in mkeys:
        if k == "runtime_seconds":
            continue
        lines.append(
            f"{k:<20}{rows['fast']['metrics'][k]:>14.6g}{rows['diffusion']['metrics'][k]:>14.6g}"
        )
    lines.append(f"fast / diffusion time ratio {rows['time_ratio']:.6g}")
    lines.append(f"fast transforms per round {rows['fast']['transforms_per_round']}")
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(args, parser)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        doc = load_document(args)
        point_rows = None
        if args.points:
            with open(args.points, encoding="utf-8") as fh:
                point_rows = cio.read_points(fh.read())
    except (cio.InputError, GeometryError, OSError, ValueError) as exc:
        print(f"cartoflow: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    try:
        if args.benchmark:
            rows = run_benchmark(args, doc)
            print(format_benchmark(rows))
            if args.metrics:
                with open(args.metrics, "w", encoding="utf-8") as fh:
                    json.dump(rows, fh, indent=2)
                    fh.write("\n")
            ok = rows["fast"]["converged"] and rows["diffusion"]["converged"]
            return EXIT_OK if ok else EXIT_UNCONVERGED

        t0 = time.perf_counter()
        result = solve_cartogram(doc, solve_options(args))
        log.info("solve finished in %.3f s", time.perf_counter() - t0)
        report = report_for(result) if args.metrics else None
        projected = None
        if point_rows is not None:
            projected = project_points(result, point_rows, args.inverse, _albers(args))
        write_outputs(args, result, report, projected)
    except RasterizationError as exc:
        print(f"cartoflow: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (IntegrationError, TopologyError, DomainError) as exc:
        print(f"cartoflow: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    if projected is not None:
        text = cio.write_points(projected)
        if args.points_out:
            with open(args.points_out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        flagged = [r[0] for r in projected if r[3]]
        if flagged:
            print(f"cartoflow: {len(flagged)} point(s) outside domain: {', '.join(flagged)}", file=sys.stderr)
    if report is not None:
        sys.stderr.write(report.to_table())
    print(summary_line(result), file=sys.stderr if args.points and not args.points_out else sys.stdout)
    return EXIT_OK if result.converged else EXIT_UNCONVERGED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
