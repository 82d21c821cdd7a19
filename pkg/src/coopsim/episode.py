"""One closed-loop episode: sense, exchange, decide, step, classify."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .policy.cooperative import CooperativePolicy
from .policy.oracle import OraclePolicy
from .protocol.bandwidth import BandwidthReport, bandwidth_totals
from .protocol.exchange import Exchanger
from .protocol.selection import Strategy
from .protocol.transport import make_transport
from .scenarios import (COLLIDER_ID, EGO_ID, ScenarioConfig, Scenario, background_controls,
                        build_world, collider_policy, stop_distance)
from .world import (DEFAULT_TIME_LIMIT, EpisodeOutcome, ReplayWriter, Status, classify_outcome,
                    step)

TRACE_COLUMNS = ("tick", "candidate", "utility", "selected", "degenerate")


@dataclass
class EpisodeResult:
    family: str
    config_index: int
    seed: int
    strategy: str
    n_s: int
    n_c: int
    outcome: EpisodeOutcome
    bandwidth: BandwidthReport
    degenerate_ticks: int = 0
    wire_bytes: int = 0
    payload_digest: str = ""
    trace: list = field(default_factory=list)

    @property
    def status(self) -> Status:
        return self.outcome.status


def run_episode(config: ScenarioConfig, strategy: Strategy | str, n_s: int = 6, n_c: int = 3,
                transport: str = "inproc", time_limit: float = DEFAULT_TIME_LIMIT,
                replay_path: Optional[Path] = None, trace: bool = False,
                scenario: Optional[Scenario] = None) -> EpisodeResult:
    strategy = Strategy(strategy)
    scen = scenario or build_world(config)
    world = scen.world
    oracle = coop = exchanger = None
    if strategy is Strategy.ORACLE:
        goal_s, _ = scen.route.project(scen.goal.pose.x, scen.goal.pose.y)
        oracle = OraclePolicy(scen.route, scen.target_speed, EGO_ID, goal_s=goal_s,
                              travel_limit=stop_distance)
    else:
        coop = CooperativePolicy(scen.route, scen.target_speed, EGO_ID, world.dt)
        exchanger = Exchanger(strategy, n_s, n_c, seed=config.seed,
                              transport=make_transport(transport))
    writer = ReplayWriter(replay_path) if replay_path is not None else None
    rows = []
    try:
        while True:
            if writer is not None:
                writer.write(world)
            outcome = classify_outcome(world, scen.goal, time_limit)
            if outcome is not None:
                break
            controls = background_controls(world, scen.cruise)
            if any(v.id == COLLIDER_ID for v in world.vehicles):
                controls[COLLIDER_ID] = collider_policy(world, config.family)
            if oracle is not None:
                controls[EGO_ID] = oracle(world)
            else:
                res = exchanger.run(world, EGO_ID)
                if trace:
                    chosen = set(res.comm_scope.members)
                    for m in res.scope.members:
                        rows.append((world.tick, m, res.utilities.get(m, ""), int(m in chosen),
                                     int(res.degenerate)))
                controls[EGO_ID] = coop(world.vehicle(EGO_ID), res.fused, world.tick)
            world = step(world, controls)
    finally:
        if writer is not None:
            writer.close()
        if exchanger is not None:
            exchanger.transport.close()
    if exchanger is not None:
        report = exchanger.ledger.report()
        wire = exchanger.ledger.total_wire_bytes
        digest = exchanger.ledger.digest()
        degenerate = exchanger.degenerate_ticks
    else:
        report, wire, digest, degenerate = bandwidth_totals(0, 0, strategy), 0, "", 0
    outcome = EpisodeOutcome(outcome.status, outcome.completion_time, outcome.ticks, report,
                             outcome.collision_pair)
    return EpisodeResult(config.family.value, config.config_index, config.seed, strategy.value,
                         n_s, n_c, outcome, report, degenerate, wire, digest, rows)


def write_trace(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        w.writerows(rows)


__all__ = ["EpisodeResult", "run_episode", "write_trace"]
