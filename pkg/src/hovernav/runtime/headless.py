"""Scripted runs without a cockpit: drive the loop, collect metrics.

A script is a timed command list.  Times are earliest-fire times in sim
seconds; commands always apply in listed order, so a later line never
jumps an earlier one even if its time has passed.  A set_goal line may
carry `await: true`, which holds all later lines until the navigator
reaches a terminal state.  The run ends `settle` seconds after the last
command completes, or at `timeout` sim seconds, whichever comes first.

The report carries everything the acceptance gates measure: the truth
track at sensor rate, the localization error series, per-goal outcomes
with first-plan path cost, the map score against the true world, the
collision count, and the final state hash.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from ..geometry import wrap_angle
from ..mapping import CellState, to_occupancy
from ..nav import NavState
from .maps import rasterize_world
from .scenario import Scenario
from .sim import Simulation

__all__ = [
    "GoalRecord",
    "MetricsReport",
    "Script",
    "ScriptCommand",
    "ScriptTimeout",
    "load_script",
    "run_headless",
]

_NAV_TERMINAL = (NavState.SUCCEEDED, NavState.FAILED)
_EPS = 1e-9


@dataclass(frozen=True)
class ScriptCommand:
    t: float
    doc: dict
    await_nav: bool = False


@dataclass(frozen=True)
class Script:
    commands: tuple[ScriptCommand, ...] = ()
    timeout: float = 300.0
    settle: float = 0.0


@dataclass(frozen=True)
class GoalRecord:
    goal: tuple[float, float, float]
    t_start: float
    t_end: float
    outcome: str
    path_cost: float | None
    err_xy: float | None
    err_yaw: float | None
    plan_count: int
    collisions: int


@dataclass(frozen=True)
class MetricsReport:
    """Everything a scripted run measures.

    localization holds (t, xy error, yaw error) of the active estimator
    against ground truth, one entry per sensor cycle; odometry holds the
    same for dead reckoning alone; truth_series is the flown track
    (t, x, y, z) at sensor rate.
    """

    commands_executed: int
    command_replies: tuple[dict, ...]
    duration: float
    wall_clock: float
    crashed: bool
    crash_reason: str
    collisions: int
    map_iou: float | None
    localization: tuple[tuple[float, float, float], ...]
    odometry: tuple[tuple[float, float, float], ...]
    truth_series: tuple[tuple[float, float, float, float], ...]
    goals: tuple[GoalRecord, ...]
    state_hash: str


class ScriptTimeout(TimeoutError):
    """Run hit the script's sim-time budget; partial metrics attached."""

    def __init__(self, message: str, report: MetricsReport):
        super().__init__(message)
        self.report = report


def load_script(path: str | Path) -> Script:
    """Parse a script YAML: {timeout, settle, commands: [{t, cmd, ...}]}."""
    doc = yaml.safe_load(Path(path).read_text())
    if doc is None:
        return Script()
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: script must be a mapping")
    commands = []
    for i, line in enumerate(doc.get("commands") or []):
        if not isinstance(line, dict) or "cmd" not in line:
            raise ValueError(f"{path}: commands[{i}] must be a mapping with a cmd")
        line = dict(line)
        t = float(line.pop("t", 0.0))
        await_nav = bool(line.pop("await", False))
        commands.append(ScriptCommand(t=t, doc=line, await_nav=await_nav))
    return Script(
        commands=tuple(commands),
        timeout=float(doc.get("timeout", 300.0)),
        settle=float(doc.get("settle", 0.0)),
    )


def _map_score(sim: Simulation) -> float | None:
    """Occupied-cell IoU between the built map and the true world."""
    grid = sim.slam_grid
    if grid is None:
        return None
    params = sim.scenario.slam
    occ = to_occupancy(grid, params.occ_threshold, params.free_threshold)
    got = occ.cells == int(CellState.OCCUPIED)
    truth = rasterize_world(sim.world, occ, frame=sim.scenario.start)
    union = int(np.count_nonzero(got | truth))
    if union == 0:
        return None
    return float(np.count_nonzero(got & truth) / union)


class _GoalTracker:
    """Closes one GoalRecord per set_goal, on terminal state or run end."""

    def __init__(self, sim: Simulation):
        self.sim = sim
        self.records: list[GoalRecord] = []
        self._open: dict | None = None

    def opened(self, doc: dict, now: float) -> None:
        self.close(now, outcome="PREEMPTED" if self._open is not None else None)
        self._open = {
            "goal": (float(doc["x"]), float(doc["y"]), float(doc.get("theta", 0.0))),
            "t_start": now,
            "collisions0": self.sim.collisions,
            "path_cost": None,
        }

    def tick(self, now: float, nav_status) -> None:
        if self._open is None:
            return
        if self._open["path_cost"] is None and self.sim.nav_path is not None:
            self._open["path_cost"] = float(self.sim.nav_path.cost)
        if nav_status is not None and nav_status.state in _NAV_TERMINAL:
            self.close(now, outcome=nav_status.state.value)

    def close(self, now: float, outcome: str | None) -> None:
        if self._open is None:
            return
        o = self._open
        self._open = None
        if outcome is None:
            nav = self.sim.snapshot().nav
            outcome = nav.state.value if nav is not None else "INCOMPLETE"
        truth = self.sim.truth_in_map()
        gx, gy, gt = o["goal"]
        self.records.append(GoalRecord(
            goal=o["goal"],
            t_start=o["t_start"],
            t_end=now,
            outcome=outcome,
            path_cost=o["path_cost"],
            err_xy=math.hypot(truth.x - gx, truth.y - gy),
            err_yaw=abs(wrap_angle(truth.theta - gt)),
            plan_count=self.sim.nav_plan_count,
            collisions=self.sim.collisions - o["collisions0"],
        ))


def run_headless(scenario: Scenario, script: Script = Script()) -> MetricsReport:
    """Execute a script against a fresh Simulation and report metrics.

    Raises ScriptTimeout (a TimeoutError) with the partial report
    attached when the sim-time budget runs out first.
    """
    wall0 = time.perf_counter()
    sim = Simulation(scenario)
    pending = deque(script.commands)
    replies: list[dict] = []
    loc_series: list[tuple[float, float, float]] = []
    odo_series: list[tuple[float, float, float]] = []
    truth_series: list[tuple[float, float, float, float]] = []
    goals = _GoalTracker(sim)
    awaiting = False
    end_time: float | None = None

    def build_report() -> MetricsReport:
        goals.close(sim.clock.now, outcome=None)
        return MetricsReport(
            commands_executed=len(replies),
            command_replies=tuple(replies),
            duration=sim.clock.now,
            wall_clock=time.perf_counter() - wall0,
            crashed=sim.status == "crashed",
            crash_reason=sim.crash_reason,
            collisions=sim.collisions,
            map_iou=_map_score(sim),
            localization=tuple(loc_series),
            odometry=tuple(odo_series),
            truth_series=tuple(truth_series),
            goals=tuple(goals.records),
            state_hash=sim.state_hash(),
        )

    while True:
        now = sim.clock.now
        while pending and not awaiting and pending[0].t <= now + _EPS:
            c = pending.popleft()
            reply = sim.command(c.doc)
            replies.append(reply)
            if c.doc.get("cmd") == "set_goal" and reply.get("ok"):
                goals.opened(c.doc, now)
                if c.await_nav:
                    awaiting = True
        if not pending and not awaiting:
            if end_time is None:
                end_time = now + script.settle
        else:
            end_time = None
        if end_time is not None and now >= end_time - _EPS:
            break
        if sim.status != "running":
            break
        if now >= script.timeout - _EPS:
            raise ScriptTimeout(
                f"script exceeded {script.timeout} sim seconds", build_report()
            )

        scans_before = sim.scan_count
        snap = sim.step(sim.clock.control_div)
        if sim.scan_count > scans_before:
            x, y, z = snap.truth.position
            truth_series.append((snap.now, x, y, z))
            tm = snap.truth_map
            est = snap.amcl if snap.amcl is not None else snap.slam
            if est is not None:
                loc_series.append((
                    snap.now,
                    math.hypot(est.x - tm.x, est.y - tm.y),
                    abs(wrap_angle(est.theta - tm.theta)),
                ))
            odo_series.append((
                snap.now,
                math.hypot(snap.odom.x - tm.x, snap.odom.y - tm.y),
                abs(wrap_angle(snap.odom.theta - tm.theta)),
            ))
            goals.tick(snap.now, snap.nav)
            if awaiting and snap.nav is not None and snap.nav.state in _NAV_TERMINAL:
                awaiting = False

    return build_report()
