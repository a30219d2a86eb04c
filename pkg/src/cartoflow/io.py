"""Reading and writing maps, target tables, points, SVG and density rasters."""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import Affine, GeometryError, MapDocument, Region, Ring


class InputError(ValueError):
    """Malformed or inconsistent user input."""


def _text(data) -> str:
    if isinstance(data, (bytes, bytearray)):
        return data.decode("utf-8-sig")
    return data


def read_values(csv_data) -> dict[str, tuple[float, str | None]]:
    """Parse an ``id,value[,color]`` table with a header row."""
    reader = csv.reader(io.StringIO(_text(csv_data)))
    rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError("values CSV is empty")
    header = [h.strip().lower() for h in rows[0]]
    if len(header) < 2:
        raise InputError("values CSV needs at least two columns (id, value)")
    color_col = header.index("color") if "color" in header else None
    out: dict[str, tuple[float, str | None]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        rid = row[0].strip()
        try:
            value = float(row[1])
        except (ValueError, IndexError):
            raise InputError(f"line {lineno}: value for {rid!r} is not a number") from None
        if not (value > 0 and math.isfinite(value)):
            raise InputError(f"line {lineno}: non-positive target {value} for region {rid!r}")
        if rid in out:
            raise InputError(f"duplicate id {rid!r} in values CSV")
        color = row[color_col].strip() if color_col is not None and color_col < len(row) else None
        out[rid] = (value, color or None)
    return out


def _feature_id(feature: Mapping, id_field: str) -> str:
    props = feature.get("properties") or {}
    if id_field in props and props[id_field] is not None:
        return str(props[id_field])
    if feature.get("id") is not None:
        return str(feature["id"])
    raise InputError("feature without an id property")


def _polygons(geometry: Mapping) -> list[list]:
    gtype = geometry.get("type")
    coords = geometry.get("coordinates")
    if gtype == "Polygon":
        return [coords]
    if gtype == "MultiPolygon":
        return list(coords)
    raise InputError(f"unsupported geometry type {gtype!r}")


def _build_polygons(rid: str, raw_polys) -> tuple[tuple[Ring, ...], ...]:
    polys = []
    for raw in raw_polys:
        if not raw:
            continue
        rings = []
        for k, raw_ring in enumerate(raw):
            pts = np.asarray(raw_ring, dtype=float)
            if pts.ndim != 2 or pts.shape[1] < 2:
                raise InputError(f"region {rid!r}: malformed ring coordinates")
            ring = Ring.oriented(pts[:, :2], hole=k > 0)
            if len(np.unique(ring.points, axis=0)) < 3:
                raise InputError(f"region {rid!r}: ring with fewer than 3 distinct vertices")
            rings.append(ring)
        polys.append(tuple(rings))
    if not polys:
        raise InputError(f"region {rid!r}: empty geometry")
    return tuple(polys)


def parse_input(geojson_data, csv_data, id_field: str = "id") -> MapDocument:
    """Match GeoJSON features to CSV targets by id.

    The first ring of every polygon is taken as its outer boundary and the
    rest as holes; ring winding in the file is ignored.
    """
    try:
        doc = json.loads(_text(geojson_data))
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed GeoJSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise InputError("malformed GeoJSON: expected a FeatureCollection")
    features = doc.get("features") or []
    values = read_values(csv_data)

    regions = []
    seen: set[str] = set()
    missing = []
    for feat in features:
        if not isinstance(feat, dict) or not isinstance(feat.get("geometry"), dict):
            raise InputError("malformed GeoJSON: feature without geometry")
        rid = _feature_id(feat, id_field)
        if rid in seen:
            raise InputError(f"duplicate feature id {rid!r}")
        seen.add(rid)
        if rid not in values:
            missing.append(rid)
            continue
        value, color = values[rid]
        try:
            region = Region(rid, _build_polygons(rid, _polygons(feat["geometry"])), value, color)
        except GeometryError as exc:
            raise InputError(str(exc)) from None
        regions.append(region)
    if missing:
        raise InputError(f"ids missing from values CSV: {', '.join(missing)}")
    unmatched = [k for k in values if k not in seen]
    if unmatched:
        raise InputError(f"CSV ids without a matching feature: {', '.join(unmatched)}")
    if not regions:
        raise InputError("no regions in input")
    return MapDocument(tuple(regions))


def _ring_coords(ring: Ring) -> list:
    pts = ring.points.tolist()
    return pts + [pts[0]]


def region_geometry(region: Region) -> dict:
    polys = [[_ring_coords(r) for r in poly] for poly in region.polygons]
    if len(polys) == 1:
        return {"type": "Polygon", "coordinates": polys[0]}
    return {"type": "MultiPolygon", "coordinates": polys}


def to_geojson(
    doc: MapDocument,
    properties: Mapping[str, Mapping] | None = None,
    denormalize: bool = False,
) -> dict:
    """Serialize regions as a FeatureCollection.

    With ``denormalize`` the coordinates are mapped back to the input planar
    frame through ``doc.frame``.
    """
    if denormalize:
        doc = doc.map_points(doc.frame.inverse)
    features = []
    for r in doc.regions:
        props = {"id": r.id, "target": r.target}
        if r.color:
            props["color"] = r.color
        if properties and r.id in properties:
            props.update(properties[r.id])
        features.append({"type": "Feature", "properties": props, "geometry": region_geometry(r)})
    return {"type": "FeatureCollection", "features": features}


def values_csv(doc: MapDocument) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    has_color = any(r.color for r in doc.regions)
    w.writerow(["id", "value", "color"] if has_color else ["id", "value"])
    for r in doc.regions:
        w.writerow([r.id, repr(float(r.target))] + ([r.color or ""] if has_color else []))
    return buf.getvalue()


def lines_geojson(lines: Sequence[np.ndarray], frame: Affine | None = None, name: str = "graticule") -> dict:
    coords = []
    for line in lines:
        pts = frame.inverse(line) if frame is not None else np.asarray(line)
        coords.append(pts.tolist())
    return {
        "type": "FeatureCollection",
        "features": [
            {
                "type": "Feature",
                "properties": {"name": name},
                "geometry": {"type": "MultiLineString", "coordinates": coords},
            }
        ],
    }


def dump_json(obj, fp=None) -> str:
    text = json.dumps(obj, separators=(",", ":"), allow_nan=False)
    if fp is not None:
        with open(fp, "w") as fh:
            fh.write(text)
    return text


# -- points --------------------------------------------------------------------


def read_points(csv_data) -> list[tuple[str, float, float]]:
    reader = csv.reader(io.StringIO(_text(csv_data)))
    rows = [r for r in reader if r]
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            out.append((row[0].strip(), float(row[1]), float(row[2])))
        except (ValueError, IndexError):
            raise InputError(f"points CSV line {lineno}: expected id,x,y") from None
    return out


def write_points(rows: Iterable[tuple[str, float, float, str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "x", "y", "flag"])
    for pid, x, y, flag in rows:
        w.writerow([pid, repr(float(x)), repr(float(y)), flag])
    return buf.getvalue()


# -- SVG -----------------------------------------------------------------------

PALETTE = (
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
    "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
)


def svg_frame(bounds, width: float = 800.0) -> tuple[float, float, float, float, float]:
    """Return ``(xmin, ymax, scale, width, height)`` for mapping map coordinates to SVG pixels."""
    xmin, ymin, xmax, ymax = bounds
    span = max(xmax - xmin, ymax - ymin)
    scale = width / span
    return xmin, ymax, scale, (xmax - xmin) * scale, (ymax - ymin) * scale


def to_svg(
    doc: MapDocument,
    points: np.ndarray | None = None,
    bounds=None,
    width: float = 800.0,
) -> str:
    """One ``<path>`` per region; SVG ``(u, v) = ((x - xmin) * s, (ymax - y) * s)``.

    The affine map is recorded in the root element's ``data-transform``
    attribute so coordinates can be recovered exactly.
    """
    if bounds is None:
        bounds = doc.bounds()
    xmin, ymax, s, w, h = svg_frame(bounds, width)

    def fmt(pts):
        u = (pts[:, 0] - xmin) * s
        v = (ymax - pts[:, 1]) * s
        return " ".join(f"{a:.10g},{b:.10g}" for a, b in zip(u, v))

    out = [
        '<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="0 0 {w:.10g} {h:.10g}" width="{w:.10g}" height="{h:.10g}" '
        f'data-transform="{float(xmin)!r} {float(ymax)!r} {float(s)!r}">'
    ]
    for k, r in enumerate(doc.regions):
        d = " ".join(f"M{fmt(ring.points)}Z" for ring in r.rings)
        fill = r.color or PALETTE[k % len(PALETTE)]
        out.append(
            f'<path id="{_xml_escape(r.id)}" fill="{_xml_escape(fill)}" stroke="#333333" '
            f'stroke-width="0.5" fill-rule="evenodd" d="{d}"/>'
        )
    if points is not None and len(points):
        for u, v in zip((points[:, 0] - xmin) * s, (ymax - points[:, 1]) * s):
            out.append(f'<circle cx="{u:.10g}" cy="{v:.10g}" r="3" fill="white" stroke="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _xml_escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


# -- density raster dump -------------------------------------------------------

_RASTER_MAGIC = "CARTOFLOW-RASTER 1"


def write_raster(path, grid: np.ndarray) -> None:
    """Float64 little-endian raster, rows of constant x, after a short text header."""
    grid = np.ascontiguousarray(grid, dtype="<f8")
    lx, ly = grid.shape
    header = f"{_RASTER_MAGIC}\nlx {lx}\nly {ly}\ndtype <f8\norder x-major\n\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(grid.tobytes())


def read_raster(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    head, sep, body = blob.partition(b"\n\n")
    lines = head.decode("ascii").splitlines()
    if not sep or lines[0] != _RASTER_MAGIC:
        raise InputError(f"{path}: not a density raster")
    meta = dict(line.split(" ", 1) for line in lines[1:])
    lx, ly = int(meta["lx"]), int(meta["ly"])
    return np.frombuffer(body, dtype="<f8").reshape(lx, ly).copy()
