"""Scenario files: one YAML document describing a complete run.

A scenario bundles the world, the vehicle and sensor parameters, every
controller/estimator/planner block, the start pose, the run mode, and
the seed.  Every block is optional except the world; omitted blocks get
the library defaults.  Validation is aggregated: all problems are
collected and raised together, each naming the offending key path.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..control import BridgeConfig
from ..geometry import Pose2D
from ..localize import BadCountError, LocalizerParams
from ..mapping import MapParams
from ..nav import CostmapParams, DwaParams, NavTolerances
from ..sensing import LidarSpec
from ..vehicle import CircleObstacle, RectObstacle, VehicleParams, WorldModel

__all__ = [
    "Mode",
    "NavConfig",
    "Scenario",
    "ValidationError",
    "load_scenario",
    "scenario_from_dict",
]


class Mode(enum.Enum):
    MAPPING = "MAPPING"
    NAVIGATION = "NAVIGATION"


class ValidationError(Exception):
    """One or more scenario problems; each names its key path."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = tuple(problems)


@dataclass(frozen=True)
class NavConfig:
    costmap: CostmapParams = CostmapParams()
    dwa: DwaParams = DwaParams()
    tolerances: NavTolerances = NavTolerances()

    def validate(self) -> list[str]:
        return (
            self.costmap.validate()
            + self.dwa.validate()
            + self.tolerances.validate()
        )


@dataclass(frozen=True)
class Scenario:
    world: WorldModel
    start: Pose2D = Pose2D(0.0, 0.0, 0.0)
    seed: int = 0
    mode: Mode = Mode.MAPPING
    map_path: str | None = None
    vehicle: VehicleParams = VehicleParams()
    lidar: LidarSpec = LidarSpec()
    controllers: BridgeConfig = BridgeConfig()
    slam: MapParams = MapParams()
    amcl: LocalizerParams = LocalizerParams()
    nav: NavConfig = NavConfig()


def _merge(default_obj, doc, path: str, problems: list[str]):
    """Overlay a YAML mapping onto a default dataclass instance.

    Unknown keys are reported, nested dataclasses merge recursively,
    lists land on tuple-typed fields as tuples.
    """
    if doc is None:
        return default_obj
    if not isinstance(doc, dict):
        problems.append(f"{path}: expected a mapping, got {type(doc).__name__}")
        return default_obj
    names = {f.name for f in dataclasses.fields(default_obj)}
    updates = {}
    for key, val in doc.items():
        if key not in names:
            problems.append(f"{path}.{key}: unknown key")
            continue
        cur = getattr(default_obj, key)
        if dataclasses.is_dataclass(cur) and not isinstance(cur, type):
            updates[key] = _merge(cur, val, f"{path}.{key}", problems)
        elif isinstance(cur, tuple) and isinstance(val, list):
            updates[key] = tuple(val)
        else:
            updates[key] = val
    try:
        return dataclasses.replace(default_obj, **updates)
    except (TypeError, ValueError) as e:
        problems.append(f"{path}: {e}")
        return default_obj


def _build_world(doc, problems: list[str]) -> WorldModel | None:
    if not isinstance(doc, dict):
        problems.append("world: expected a mapping with bounds and obstacles")
        return None
    unknown = set(doc) - {"bounds", "obstacles"}
    for key in sorted(unknown):
        problems.append(f"world.{key}: unknown key")
    bounds = doc.get("bounds")
    if not (isinstance(bounds, list) and len(bounds) == 4
            and all(isinstance(v, (int, float)) for v in bounds)):
        problems.append("world.bounds: expected [xmin, ymin, xmax, ymax]")
        return None
    obstacles = []
    for i, ob in enumerate(doc.get("obstacles") or []):
        where = f"world.obstacles[{i}]"
        if not isinstance(ob, dict):
            problems.append(f"{where}: expected a mapping")
            continue
        kind = ob.get("type")
        oid = str(ob.get("id", f"ob{i}"))
        try:
            if kind == "rect":
                obstacles.append(RectObstacle(
                    id=oid,
                    xmin=float(ob["xmin"]), ymin=float(ob["ymin"]),
                    xmax=float(ob["xmax"]), ymax=float(ob["ymax"]),
                ))
            elif kind == "circle":
                obstacles.append(CircleObstacle(
                    id=oid,
                    cx=float(ob["cx"]), cy=float(ob["cy"]),
                    radius=float(ob["radius"]),
                ))
            else:
                problems.append(f"{where}.type: expected 'rect' or 'circle', got {kind!r}")
        except (KeyError, TypeError, ValueError) as e:
            problems.append(f"{where}: {e!r}")
    world = WorldModel(
        xmin=float(bounds[0]), ymin=float(bounds[1]),
        xmax=float(bounds[2]), ymax=float(bounds[3]),
        obstacles=tuple(obstacles),
    )
    problems.extend(f"world: {p}" for p in world.validate())
    return world


def _build_pose(doc, path: str, problems: list[str]) -> Pose2D:
    if doc is None:
        return Pose2D(0.0, 0.0, 0.0)
    if not isinstance(doc, dict):
        problems.append(f"{path}: expected a mapping with x, y, theta")
        return Pose2D(0.0, 0.0, 0.0)
    for key in sorted(set(doc) - {"x", "y", "theta"}):
        problems.append(f"{path}.{key}: unknown key")
    try:
        return Pose2D(
            float(doc.get("x", 0.0)),
            float(doc.get("y", 0.0)),
            float(doc.get("theta", 0.0)),
        )
    except (TypeError, ValueError) as e:
        problems.append(f"{path}: {e!r}")
        return Pose2D(0.0, 0.0, 0.0)


_BLOCKS = {
    "vehicle": VehicleParams,
    "lidar": LidarSpec,
    "controllers": BridgeConfig,
    "slam": MapParams,
    "amcl": LocalizerParams,
    "nav": NavConfig,
}
_TOP_KEYS = {"world", "start", "seed", "mode", "map_path", *_BLOCKS}


def scenario_from_dict(doc: dict, base_dir: str | Path | None = None) -> Scenario:
    """Build and fully validate a Scenario from a parsed YAML mapping.

    Relative map paths resolve against base_dir when given.  Raises
    ValidationError listing every problem found, each with its key path.
    """
    problems: list[str] = []
    if not isinstance(doc, dict):
        raise ValidationError(["scenario: document must be a mapping"])
    for key in sorted(set(doc) - _TOP_KEYS):
        problems.append(f"{key}: unknown key")

    if "world" not in doc:
        problems.append("world: required block is missing")
        world = None
    else:
        world = _build_world(doc["world"], problems)

    start = _build_pose(doc.get("start"), "start", problems)

    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        problems.append(f"seed: expected an integer in [0, 2^64), got {seed!r}")
        seed = 0

    mode_raw = doc.get("mode", "MAPPING")
    try:
        mode = Mode(mode_raw)
    except ValueError:
        problems.append(f"mode: expected MAPPING or NAVIGATION, got {mode_raw!r}")
        mode = Mode.MAPPING

    map_path = doc.get("map_path")
    if map_path is not None:
        if not isinstance(map_path, str) or not map_path:
            problems.append(f"map_path: expected a non-empty string, got {map_path!r}")
            map_path = None
        elif base_dir is not None and not Path(map_path).is_absolute():
            map_path = str(Path(base_dir) / map_path)
    if mode is Mode.NAVIGATION and map_path is None:
        problems.append("mode: NAVIGATION requires map_path")

    blocks = {}
    for name, cls in _BLOCKS.items():
        blocks[name] = _merge(cls(), doc.get(name), name, problems)

    # block-level semantic checks, each prefixed with its path
    for name in ("vehicle", "lidar", "controllers", "slam", "nav"):
        problems.extend(f"{name}: {p}" for p in blocks[name].validate())
    try:
        blocks["amcl"].validate()
    except (BadCountError, ValueError) as e:
        problems.append(f"amcl: {e}")

    if world is not None:
        if not (world.xmin <= start.x <= world.xmax
                and world.ymin <= start.y <= world.ymax):
            problems.append("start: pose lies outside world bounds")
    if not math.isfinite(start.theta):
        problems.append("start.theta: must be finite")

    if problems:
        raise ValidationError(problems)
    assert world is not None
    return Scenario(
        world=world,
        start=start,
        seed=seed,
        mode=mode,
        map_path=map_path,
        vehicle=blocks["vehicle"],
        lidar=blocks["lidar"],
        controllers=blocks["controllers"],
        slam=blocks["slam"],
        amcl=blocks["amcl"],
        nav=blocks["nav"],
    )


def load_scenario(path: str | Path) -> Scenario:
    """Read and validate a scenario YAML file.

    File and parse failures are reported through the same aggregated
    error channel as semantic problems.
    """
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ValidationError([f"{p}: {e}"]) from e
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ValidationError([f"{p}: invalid YAML: {e}"]) from e
    if doc is None:
        raise ValidationError([f"{p}: empty scenario file"])
    return scenario_from_dict(doc, base_dir=p.parent)
