"""Campaigns: the (family, config, seed, strategy, N_s) matrix, its reports and traces."""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from multiprocessing import get_context
from pathlib import Path
from typing import Optional, Sequence

from .episode import EpisodeResult, run_episode, write_trace
from .metrics import CSV_COLUMNS, CampaignResult, EpisodeRecord, aggregate, sct
from .protocol.selection import Strategy
from .scenarios import FAMILIES, N_CONFIGS, Family, ScenarioConfig
from .world import DEFAULT_TIME_LIMIT, Status

log = logging.getLogger(__name__)

SEED_ENV = "COOPSIM_SEED"
REPORT_NAME = "campaign.csv"
EPISODES_NAME = "episodes.csv"
EPISODE_COLUMNS = ("family", "config_index", "seed", "strategy", "N_s", "N_c", "status",
                   "completion_time", "ticks", "t_expert", "sct", "degenerate_ticks",
                   "bytes_per_s_total", "wire_bytes", "payload_digest")
# strategies that never select partners report N_s = N_c = 0
SCOPELESS = (Strategy.ORACLE, Strategy.NOCOMM)


class CampaignError(RuntimeError):
    pass


@dataclass(frozen=True)
class CampaignSpec:
    families: tuple[str, ...] = tuple(f.value for f in FAMILIES)
    strategies: tuple[str, ...] = ("Selective", "Random")
    n_s: tuple[int, ...] = (6, 10)
    n_c: int = 3
    seeds: int = 3  # seeds 0..seeds-1 per config
    configs: tuple[int, ...] = tuple(range(N_CONFIGS))
    jobs: int = 1
    out: str = "results"
    transport: str = "inproc"
    time_limit: float = DEFAULT_TIME_LIMIT
    random_n_s: Optional[int] = 6  # Random runs only at this N_s; None runs every N_s
    seed_override: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("families", "strategies", "n_s", "configs"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "families", tuple(Family(f).value for f in self.families))
        object.__setattr__(self, "strategies", tuple(Strategy(s).value for s in self.strategies))
        if not self.families or not self.strategies:
            raise ValueError("a campaign needs at least one family and one strategy")
        if not self.n_s:
            raise ValueError("n_s must list at least one scope size")
        if self.n_c < 1 or self.n_c > min(self.n_s):
            raise ValueError(f"N_c must be in 1..min(N_s) = {min(self.n_s)}, got {self.n_c}")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        for ci in self.configs:
            if not 0 <= ci < N_CONFIGS:
                raise ValueError(f"config index {ci} outside 0..{N_CONFIGS - 1}")

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignSpec":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown campaign fields: {sorted(unknown)}")
        return cls(**known)

    @classmethod
    def load(cls, path: Path | str) -> "CampaignSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("seed_override")
        return json.dumps(d, sort_keys=True, indent=2)

    def seed_list(self) -> list[int]:
        env = os.environ.get(SEED_ENV)
        if self.seed_override is not None:
            return [self.seed_override]
        if env:
            return [int(env)]
        return list(range(self.seeds))

    def variants(self) -> list[tuple[str, int, int]]:
        """(strategy, N_s, N_c) in run order; Oracle always comes first."""
        out = [("Oracle", 0, 0)]
        for st in self.strategies:
            s = Strategy(st)
            if s is Strategy.ORACLE:
                continue
            if s in SCOPELESS:
                out.append((st, 0, 0))
                continue
            for n_s in self.n_s:
                if s is Strategy.RANDOM and self.random_n_s is not None and n_s != self.random_n_s:
                    continue
                out.append((st, n_s, self.n_c))
        return out

    def episode_count(self) -> int:
        cells = len(self.families) * len(self.configs) * len(self.seed_list())
        return cells * len(self.variants())


@dataclass(frozen=True)
class Task:
    family: str
    config_index: int
    seed: int
    strategy: str
    n_s: int
    n_c: int
    transport: str
    time_limit: float
    replay_path: Optional[str] = None
    trace: bool = False

    @property
    def order(self) -> tuple:
        return (self.family, self.config_index, self.seed, self.strategy, self.n_s)


def _run(task: Task) -> tuple[Task, EpisodeResult]:
    cfg = ScenarioConfig(Family(task.family), task.config_index, task.seed)
    res = run_episode(cfg, task.strategy, task.n_s or 6, task.n_c or 3, task.transport,
                      task.time_limit, Path(task.replay_path) if task.replay_path else None,
                      task.trace)
    res.n_s, res.n_c = task.n_s, task.n_c
    return task, res


# oracle results keyed by (family, config, seed, time limit); shared across campaigns in a process
_ORACLE_CACHE: dict[tuple, EpisodeResult] = {}


def _map(tasks: Sequence[Task], jobs: int):
    if jobs == 1 or len(tasks) <= 1:
        for t in tasks:
            yield _run(t)
        return
    with get_context("fork").Pool(jobs) as pool:
        yield from pool.imap_unordered(_run, tasks, chunksize=1)


def _file_stem(t: Task) -> str:
    return f"{t.family}_{t.config_index:02d}_s{t.seed}_{t.strategy}_ns{t.n_s}"


def run_campaign(spec: CampaignSpec, out_dir: Optional[Path | str] = None,
                 replay_dir: Optional[Path | str] = None, plot_csv: bool = False,
                 write: bool = True) -> CampaignResult:
    """Run oracle episodes first for the expert times, then every strategy episode.

    Results are merged in (family, config, seed, strategy, N_s) order whatever
    the worker count, so reports do not depend on scheduling.
    """
    out = Path(out_dir if out_dir is not None else spec.out)
    seeds = spec.seed_list()
    cells = [(f, c, s) for f in spec.families for c in spec.configs for s in seeds]
    variants = spec.variants()

    def task(cell, var) -> Task:
        t = Task(*cell, *var, spec.transport, spec.time_limit)
        replay = str(Path(replay_dir) / f"{_file_stem(t)}.csv") if replay_dir else None
        return Task(*cell, *var, spec.transport, spec.time_limit, replay,
                    plot_csv and var[1] > 0)

    results: dict[tuple, EpisodeResult] = {}
    try:
        oracle_tasks = []
        for cell in cells:
            key = cell + (spec.time_limit,)
            if key in _ORACLE_CACHE and not replay_dir:
                results[task(cell, variants[0]).order] = _ORACLE_CACHE[key]
            else:
                oracle_tasks.append(task(cell, variants[0]))
        for t, res in _map(oracle_tasks, spec.jobs):
            _ORACLE_CACHE[(t.family, t.config_index, t.seed, t.time_limit)] = res
            results[t.order] = res
        experts = {}
        for cell in cells:
            res = results[task(cell, variants[0]).order]
            if res.status is not Status.SUCCESS:
                raise CampaignError(f"oracle failed on {cell}: {res.status.value}")
            experts[cell] = res.outcome.completion_time
        strat_tasks = [task(cell, var) for cell in cells for var in variants[1:]]
        for t, res in _map(strat_tasks, spec.jobs):
            results[t.order] = res
            if t.trace:
                write_trace(out / "traces" / f"{_file_stem(t)}.csv", res.trace)
    finally:
        if write:
            _write_episodes(out, spec, results)
    wanted = {"Oracle"} | set(spec.strategies)
    records = [EpisodeRecord.from_result(results[k], experts[k[:3]])
               for k in sorted(results) if results[k].strategy in wanted]
    result = aggregate(records, spec.families)
    if write:
        write_report(out / REPORT_NAME, result)
    return result


def _write_episodes(out: Path, spec: CampaignSpec, results: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "spec.json").write_text(spec.to_json() + "\n")
    experts = {k[:3]: r.outcome.completion_time for k, r in results.items()
               if r.strategy == "Oracle" and r.status is Status.SUCCESS}
    with open(out / EPISODES_NAME, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPISODE_COLUMNS)
        for k in sorted(results):
            r = results[k]
            o = r.outcome
            t_exp = experts.get(k[:3])
            score = sct(o, t_exp) if t_exp is not None else ""
            w.writerow([r.family, r.config_index, r.seed, r.strategy, r.n_s, r.n_c,
                        o.status.value, f"{o.completion_time:.1f}", o.ticks,
                        "" if t_exp is None else f"{t_exp:.1f}",
                        score if score == "" else f"{score:.6f}", r.degenerate_ticks,
                        f"{r.bandwidth.total_bytes_per_s:.3f}", r.wire_bytes, r.payload_digest])


def write_report(path: Path, result: CampaignResult, stamp: Optional[str] = None) -> None:
    """Per-group CSV; the first line is a timestamp comment and the rest is deterministic."""
    path.parent.mkdir(parents=True, exist_ok=True)
    stamp = stamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
    with open(path, "w", newline="") as fh:
        fh.write(f"# generated {stamp}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for g in result.groups:
            w.writerow(g.csv_row())


def format_table(result: CampaignResult) -> str:
    head = f"{'family':<18} {'strategy':<10} {'N_s':>3} {'eps':>4} {'SR':>6} {'SCT':>6} " \
           f"{'CR':>6} {'stag':>6} {'Mbps':>7}"
    lines = [head]
    for g in result.groups:
        lines.append(f"{g.family:<18} {g.strategy:<10} {g.n_s:>3} {g.episodes:>4} "
                     f"{100 * g.sr:6.1f} {100 * g.sct:6.1f} {100 * g.cr:6.1f} "
                     f"{100 * g.stagnation:6.1f} {g.total_mbps:7.2f}")
    return "\n".join(lines)
