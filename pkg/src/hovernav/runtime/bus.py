"""Typed in-process topic bus.

Publishers never block: every subscription is a bounded deque that drops
its oldest entry when full, and the per-subscription drop count stays
observable. One publisher per topic, except the command topic that the
mode arbiter multiplexes.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any

TOPIC_NAMES = (
    "scan",
    "twist_cmd",
    "truth_state",
    "slam_pose",
    "amcl_pose",
    "grid_snapshot",
    "costmap_snapshot",
    "path",
    "nav_status",
    "transform_updates",
)

MULTI_PUBLISHER_TOPICS = ("twist_cmd",)


class PublisherConflictError(Exception):
    """A second distinct publisher on a single-publisher topic."""


@dataclass
class Subscription:
    topic: str
    maxlen: int
    queue: deque = field(default_factory=deque)
    drops: int = 0

    def push(self, msg: Any) -> None:
        if len(self.queue) >= self.maxlen:
            self.queue.popleft()
            self.drops += 1
        self.queue.append(msg)

    def drain(self) -> list[Any]:
        out = list(self.queue)
        self.queue.clear()
        return out

    def __len__(self) -> int:
        return len(self.queue)


class Topic:
    def __init__(self, name: str, multi_publisher: bool = False):
        self.name = name
        self.multi_publisher = multi_publisher
        self.publisher: str | None = None
        self.latest: Any = None
        self.seq = 0
        self._subs: list[Subscription] = []

    def publish(self, msg: Any, source: str = "sim") -> None:
        if not self.multi_publisher:
            if self.publisher is None:
                self.publisher = source
            elif self.publisher != source:
                raise PublisherConflictError(
                    f"topic {self.name} already published by {self.publisher}, "
                    f"refusing {source}"
                )
        self.latest = msg
        self.seq += 1
        for sub in self._subs:
            sub.push(msg)

    def subscribe(self, maxlen: int = 64) -> Subscription:
        sub = Subscription(topic=self.name, maxlen=maxlen)
        self._subs.append(sub)
        return sub


class TopicBus:
    """The fixed topic set, keyed by name."""

    def __init__(self):
        self.topics = {
            name: Topic(name, multi_publisher=name in MULTI_PUBLISHER_TOPICS)
            for name in TOPIC_NAMES
        }

    def __getitem__(self, name: str) -> Topic:
        return self.topics[name]

    def publish(self, name: str, msg: Any, source: str = "sim") -> None:
        self.topics[name].publish(msg, source)

    def latest(self, name: str) -> Any:
        return self.topics[name].latest

    def subscribe(self, name: str, maxlen: int = 64) -> Subscription:
        return self.topics[name].subscribe(maxlen)

    def drop_counts(self) -> dict[str, int]:
        return {
            name: sum(s.drops for s in topic._subs)
            for name, topic in self.topics.items()
        }
