"""Planar rigid transforms and the named-frame transform tree.

Conventions used everywhere in this package:

* angles are radians, normalized into ``(-pi, pi]``
* a ``Transform2D`` acts on points as rotate-then-translate
* a tree edge ``parent -> child`` stores the transform that maps points
  expressed in the child frame into the parent frame
* ``lookup(a, b)`` therefore returns the transform mapping b-frame points
  into a-frame coordinates
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

MAP_FRAME = "map"
ODOM_FRAME = "odom"
BASE_FRAME = "base_link"
LIDAR_FRAME = "lidar_link"

_TWO_PI = 2.0 * math.pi


class CycleError(Exception):
    """Adding this edge would create a cycle in the frame graph."""


class MultipleParentError(Exception):
    """The child frame already has a different parent."""


class UnknownFrameError(KeyError):
    """A frame name that no edge mentions."""


class DisconnectedError(Exception):
    """Both frames exist but live in different components."""


def wrap_angle(a: float) -> float:
    """Normalize an angle into (-pi, pi]."""
    r = (a + math.pi) % _TWO_PI - math.pi
    if r <= -math.pi:
        r = math.pi
    return r


@dataclass(frozen=True)
class Pose2D:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))


@dataclass(frozen=True)
class Transform2D:
    """Rigid planar transform: p' = R(rot) @ p + (tx, ty)."""

    tx: float = 0.0
    ty: float = 0.0
    rot: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "rot", wrap_angle(self.rot))

    @classmethod
    def identity(cls) -> "Transform2D":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_pose(cls, pose: Pose2D) -> "Transform2D":
        """A pose is the transform from its body frame into the world frame."""
        return cls(pose.x, pose.y, pose.theta)

    def to_pose(self) -> Pose2D:
        return Pose2D(self.tx, self.ty, self.rot)

    def apply(self, x: float, y: float) -> tuple[float, float]:
        c, s = math.cos(self.rot), math.sin(self.rot)
        return (c * x - s * y + self.tx, s * x + c * y + self.ty)


def compose(a: Transform2D, b: Transform2D) -> Transform2D:
    """Transform applying b first, then a."""
    c, s = math.cos(a.rot), math.sin(a.rot)
    return Transform2D(
        a.tx + c * b.tx - s * b.ty,
        a.ty + s * b.tx + c * b.ty,
        a.rot + b.rot,
    )


def invert(t: Transform2D) -> Transform2D:
    c, s = math.cos(t.rot), math.sin(t.rot)
    return Transform2D(-(c * t.tx + s * t.ty), -(-s * t.tx + c * t.ty), -t.rot)


def compose_pose(pose: Pose2D, delta: Transform2D) -> Pose2D:
    """Advance a pose by a body-frame motion increment."""
    return compose(Transform2D.from_pose(pose), delta).to_pose()


def pose_delta(a: Pose2D, b: Pose2D) -> Transform2D:
    """Body-frame motion taking pose a to pose b (a^-1 * b)."""
    return compose(invert(Transform2D.from_pose(a)), Transform2D.from_pose(b))


@dataclass(frozen=True)
class _Edge:
    parent: str
    transform: Transform2D
    stamp: float


@dataclass(frozen=True)
class TransformTree:
    """Immutable frame graph; every update returns a new tree.

    Kept as child -> (parent, transform, stamp). The graph may transiently
    be a forest while frames are being attached; lookups across components
    raise DisconnectedError.
    """

    edges: dict[str, _Edge] = field(default_factory=dict)
    root: str | None = None

    def frames(self) -> set[str]:
        names = set(self.edges.keys())
        names.update(e.parent for e in self.edges.values())
        return names

    def _ancestors(self, frame: str) -> list[str]:
        chain = [frame]
        while chain[-1] in self.edges:
            chain.append(self.edges[chain[-1]].parent)
        return chain

    def set_transform(
        self, parent: str, child: str, t: Transform2D, stamp: float = 0.0
    ) -> "TransformTree":
        if parent == child:
            raise CycleError(f"{parent!r} cannot be its own parent")
        existing = self.edges.get(child)
        if existing is not None and existing.parent != parent:
            raise MultipleParentError(
                f"{child!r} already has parent {existing.parent!r}"
            )
        if child in self._ancestors(parent):
            raise CycleError(f"edge {parent!r}->{child!r} would close a cycle")
        edges = dict(self.edges)
        edges[child] = _Edge(parent, t, stamp)
        root = self.root if self.root is not None else parent
        # a new edge may re-root the component (e.g. map->odom added above odom)
        while root in edges:
            root = edges[root].parent
        return TransformTree(edges, root)

    def lookup(self, from_frame: str, to_frame: str) -> Transform2D:
        known = self.frames()
        for f in (from_frame, to_frame):
            if f not in known:
                raise UnknownFrameError(f)
        if from_frame == to_frame:
            return Transform2D.identity()

        # accumulated transform mapping `from_frame` points into each ancestor
        up_from: dict[str, Transform2D] = {from_frame: Transform2D.identity()}
        frame, acc = from_frame, Transform2D.identity()
        while frame in self.edges:
            edge = self.edges[frame]
            acc = compose(edge.transform, acc)
            frame = edge.parent
            up_from[frame] = acc

        frame, acc = to_frame, Transform2D.identity()
        while True:
            if frame in up_from:
                return compose(invert(up_from[frame]), acc)
            if frame not in self.edges:
                raise DisconnectedError(
                    f"no path between {from_frame!r} and {to_frame!r}"
                )
            edge = self.edges[frame]
            acc = compose(edge.transform, acc)
            frame = edge.parent


def format_tree(tree: TransformTree) -> str:
    """Text dump in parent->child indentation order, one frame per line."""
    children: dict[str, list[str]] = {}
    for child, edge in tree.edges.items():
        children.setdefault(edge.parent, []).append(child)
    roots = sorted(f for f in tree.frames() if f not in tree.edges)
    lines: list[str] = []

    def walk(frame: str, depth: int) -> None:
        if depth == 0:
            lines.append(frame)
        else:
            edge = tree.edges[frame]
            t = edge.transform
            lines.append(
                "  " * depth
                + f"{frame}  [x={t.tx:+.3f} y={t.ty:+.3f} theta={t.rot:+.4f} stamp={edge.stamp:.3f}]"
            )
        for c in sorted(children.get(frame, [])):
            walk(c, depth + 1)

    for r in roots:
        walk(r, 0)
    return "\n".join(lines)
