"""Occupancy-map persistence in the portable graymap convention.

A saved map is two files: a binary P5 PGM raster and a YAML sidecar
describing its georeferencing.  Free cells are written as 255, occupied
as 0, unknown as 205; the sidecar carries resolution, origin, and the
occupancy thresholds used to decode gray levels back into the trinary
grid.  Loading inverts saving exactly for those three levels, so a
save/load round trip reproduces the grid bit for bit.

PGM rows run top to bottom while grid row 0 sits at the origin corner
(bottom), so the raster is vertically flipped on both paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from ..geometry import Pose2D
from ..mapping import CellState, LogOddsGrid, OccupancyGrid, to_occupancy
from ..vehicle import RectObstacle, WorldModel

__all__ = [
    "FormatError",
    "IoError",
    "MapMeta",
    "load_map",
    "rasterize_world",
    "save_map",
]

# Gray levels for the three cell states, indexed by CellState value.
_STATE_TO_GRAY = np.array([255, 0, 205], dtype=np.uint8)

DEFAULT_OCCUPIED_THRESH = 0.65
DEFAULT_FREE_THRESH = 0.196


class IoError(Exception):
    """A map file could not be read or written."""

    def __init__(self, path: Path, cause: OSError):
        super().__init__(f"{path}: {cause}")
        self.path = path
        self.cause = cause


class FormatError(Exception):
    """A map file exists but does not parse.

    The message carries a location: 'line N' for sidecar problems,
    'byte N' for raster problems.
    """

    def __init__(self, path: Path, where: str, problem: str):
        super().__init__(f"{path}: {where}: {problem}")
        self.path = path
        self.where = where
        self.problem = problem


@dataclass(frozen=True)
class MapMeta:
    """Decoded sidecar fields for one saved map."""

    image: str
    resolution: float
    origin: Pose2D
    occupied_thresh: float = DEFAULT_OCCUPIED_THRESH
    free_thresh: float = DEFAULT_FREE_THRESH
    negate: int = 0


def _map_paths(path: str | Path) -> tuple[Path, Path]:
    """Resolve a user-supplied path to the (pgm, yaml) file pair.

    Accepts the bare stem, the .pgm, or the .yaml path; the sibling
    file always shares the stem.
    """
    p = Path(path)
    if p.suffix in (".pgm", ".yaml", ".yml"):
        stem = p.with_suffix("")
    else:
        stem = p
    return stem.with_suffix(".pgm"), stem.with_suffix(".yaml")


def save_map(grid: LogOddsGrid | OccupancyGrid, path: str | Path) -> tuple[Path, Path]:
    """Write a grid as a PGM raster plus YAML sidecar; returns both paths.

    Log-odds input is first reduced to the trinary grid with the
    default publication thresholds.
    """
    occ = to_occupancy(grid) if isinstance(grid, LogOddsGrid) else grid
    if occ.width <= 0 or occ.height <= 0 or occ.cells.size == 0:
        raise ValueError("refusing to save an empty grid")

    pgm_path, yaml_path = _map_paths(path)
    gray = _STATE_TO_GRAY[occ.cells]
    header = f"P5\n{occ.width} {occ.height}\n255\n".encode("ascii")
    try:
        pgm_path.write_bytes(header + np.flipud(gray).tobytes())
    except OSError as e:
        raise IoError(pgm_path, e) from e

    o = occ.origin
    sidecar = (
        f"image: {pgm_path.name}\n"
        f"resolution: {occ.resolution!r}\n"
        f"origin: [{o.x!r}, {o.y!r}, {o.theta!r}]\n"
        f"occupied_thresh: {DEFAULT_OCCUPIED_THRESH!r}\n"
        f"free_thresh: {DEFAULT_FREE_THRESH!r}\n"
        f"negate: 0\n"
    )
    try:
        yaml_path.write_text(sidecar, encoding="ascii")
    except OSError as e:
        raise IoError(yaml_path, e) from e
    return pgm_path, yaml_path


def _load_meta(yaml_path: Path) -> MapMeta:
    try:
        text = yaml_path.read_text()
    except OSError as e:
        raise IoError(yaml_path, e) from e
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else "line ?"
        raise FormatError(yaml_path, where, f"invalid YAML: {e}") from e
    if not isinstance(doc, dict):
        raise FormatError(yaml_path, "line 1", "sidecar is not a mapping")

    def _field(key, default=None):
        if key in doc:
            return doc[key]
        if default is not None:
            return default
        raise FormatError(yaml_path, "line 1", f"missing required key {key!r}")

    image = _field("image")
    resolution = _field("resolution")
    origin = _field("origin")
    if not isinstance(resolution, (int, float)) or resolution <= 0:
        raise FormatError(yaml_path, "line 1", f"resolution must be positive, got {resolution!r}")
    if not (isinstance(origin, list) and len(origin) == 3
            and all(isinstance(v, (int, float)) for v in origin)):
        raise FormatError(yaml_path, "line 1", f"origin must be [x, y, theta], got {origin!r}")
    return MapMeta(
        image=str(image),
        resolution=float(resolution),
        origin=Pose2D(float(origin[0]), float(origin[1]), float(origin[2])),
        occupied_thresh=float(_field("occupied_thresh", DEFAULT_OCCUPIED_THRESH)),
        free_thresh=float(_field("free_thresh", DEFAULT_FREE_THRESH)),
        negate=int(_field("negate", 0)),
    )


def _pgm_tokens(buf: bytes, path: Path) -> tuple[list[tuple[str, int]], int]:
    """Header tokens (text, byte offset) and the raster start offset.

    Collects exactly four tokens (magic, width, height, maxval),
    honoring '#' comments, then consumes the single whitespace byte
    that separates the header from raster data.
    """
    tokens: list[tuple[str, int]] = []
    i = 0
    while len(tokens) < 4:
        if i >= len(buf):
            raise FormatError(path, f"byte {i}", "truncated header")
        c = buf[i:i + 1]
        if c == b"#":
            while i < len(buf) and buf[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            start = i
            while i < len(buf) and not buf[i:i + 1].isspace() and buf[i:i + 1] != b"#":
                i += 1
            tokens.append((buf[start:i].decode("ascii", "replace"), start))
    if i >= len(buf) or not buf[i:i + 1].isspace():
        raise FormatError(path, f"byte {i}", "missing whitespace after maxval")
    return tokens, i + 1


def _load_raster(pgm_path: Path) -> tuple[np.ndarray, int]:
    try:
        buf = pgm_path.read_bytes()
    except OSError as e:
        raise IoError(pgm_path, e) from e
    tokens, data_at = _pgm_tokens(buf, pgm_path)
    (magic, at0), (w_tok, at1), (h_tok, at2), (mv_tok, at3) = tokens
    if magic != "P5":
        raise FormatError(pgm_path, f"byte {at0}", f"expected magic 'P5', got {magic!r}")
    try:
        width, height, maxval = int(w_tok), int(h_tok), int(mv_tok)
    except ValueError:
        raise FormatError(pgm_path, f"byte {at1}",
                          f"non-integer dimensions {w_tok!r} {h_tok!r} {mv_tok!r}") from None
    if width <= 0 or height <= 0:
        raise FormatError(pgm_path, f"byte {at1}", f"bad dimensions {width}x{height}")
    if not 0 < maxval < 256:
        raise FormatError(pgm_path, f"byte {at3}", f"maxval {maxval} outside 1..255")
    need = width * height
    have = len(buf) - data_at
    if have < need:
        raise FormatError(pgm_path, f"byte {data_at}",
                          f"raster short: expected {need} bytes, found {have}")
    raster = np.frombuffer(buf, dtype=np.uint8, count=need, offset=data_at)
    return raster.reshape(height, width), maxval


def load_map(path: str | Path) -> OccupancyGrid:
    """Read a PGM+YAML map pair back into a trinary grid.

    Gray levels decode through occupancy probability: p = (maxval - v) /
    maxval (inverted when negate is set), then p > occupied_thresh is
    occupied, p < free_thresh is free, anything between stays unknown.
    """
    _, yaml_path = _map_paths(path)
    meta = _load_meta(yaml_path)
    image = Path(meta.image)
    if not image.is_absolute():
        image = yaml_path.parent / image
    raster, maxval = _load_raster(image)

    v = raster.astype(np.float64)
    p = v / maxval if meta.negate else (maxval - v) / maxval
    cells = np.full(raster.shape, int(CellState.UNKNOWN), dtype=np.uint8)
    cells[p > meta.occupied_thresh] = int(CellState.OCCUPIED)
    cells[p < meta.free_thresh] = int(CellState.FREE)
    height, width = raster.shape
    return OccupancyGrid(
        resolution=meta.resolution,
        width=width,
        height=height,
        origin=meta.origin,
        cells=np.flipud(cells).copy(),
    )


def _boundary_points(world: WorldModel, fine: float) -> list[tuple[float, float]]:
    """Dense sample points along every wall and obstacle boundary."""
    pts: list[tuple[float, float]] = []
    walls = [
        ((world.xmin, world.ymin), (world.xmax, world.ymin)),
        ((world.xmax, world.ymin), (world.xmax, world.ymax)),
        ((world.xmax, world.ymax), (world.xmin, world.ymax)),
        ((world.xmin, world.ymax), (world.xmin, world.ymin)),
    ]
    for ob in world.obstacles:
        if isinstance(ob, RectObstacle):
            walls += [
                ((ob.xmin, ob.ymin), (ob.xmax, ob.ymin)),
                ((ob.xmax, ob.ymin), (ob.xmax, ob.ymax)),
                ((ob.xmax, ob.ymax), (ob.xmin, ob.ymax)),
                ((ob.xmin, ob.ymax), (ob.xmin, ob.ymin)),
            ]
        else:
            n = int(2 * math.pi * ob.radius / fine) + 1
            for k in range(n):
                a = 2 * math.pi * k / n
                pts.append((ob.cx + ob.radius * math.cos(a),
                            ob.cy + ob.radius * math.sin(a)))
    for (x0, y0), (x1, y1) in walls:
        n = int(math.hypot(x1 - x0, y1 - y0) / fine) + 1
        for k in range(n + 1):
            pts.append((x0 + (x1 - x0) * k / n, y0 + (y1 - y0) * k / n))
    return pts


def rasterize_world(
    world: WorldModel,
    grid: OccupancyGrid | LogOddsGrid,
    frame: Pose2D | None = None,
) -> np.ndarray:
    """Boolean (height, width) mask of cells the true boundaries touch.

    Samples every wall and obstacle outline at a tenth of the cell size
    and marks each cell a sample lands in.  This is the reference
    raster that mapped-versus-true comparisons score against.  When the
    grid lives in a frame anchored at some world pose (a survey that
    started away from the world origin), pass that pose as `frame` and
    the samples are re-expressed in it first.
    """
    mask = np.zeros((grid.height, grid.width), dtype=bool)
    res = grid.resolution
    if frame is not None:
        c, s = math.cos(frame.theta), math.sin(frame.theta)
    for px, py in _boundary_points(world, res / 10.0):
        if frame is not None:
            dx, dy = px - frame.x, py - frame.y
            px, py = c * dx + s * dy, -s * dx + c * dy
        ix = int(math.floor((px - grid.origin.x) / res))
        iy = int(math.floor((py - grid.origin.y) / res))
        if 0 <= ix < grid.width and 0 <= iy < grid.height:
            mask[iy, ix] = True
    return mask
