"""Episode scores, per-group campaign aggregates and a Welch t-test."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from scipy.special import betainc

from .world import EpisodeOutcome, Status

log = logging.getLogger(__name__)

AVERAGE = "Average"
CSV_COLUMNS = ("family", "strategy", "N_s", "N_c", "episodes", "SR", "SCT", "CR", "stagnation",
               "single_mbps", "total_mbps", "bytes_per_s_total")


class MissingExpertTime(ValueError):
    """SCT needs the oracle's completion time on the same config and seed."""


def sct_detail(outcome: EpisodeOutcome, t_expert: Optional[float]) -> tuple[float, bool]:
    """(score, capped): success weighted by expert over model completion time.

    The ratio is capped at 1 when the model finishes before the expert; the
    flag says whether that happened.
    """
    if t_expert is None or not t_expert > 0:
        raise MissingExpertTime(f"expert completion time must be positive, got {t_expert!r}")
    if outcome.status is not Status.SUCCESS:
        return 0.0, False
    ratio = t_expert / outcome.completion_time
    if ratio > 1.0:
        return 1.0, True
    return ratio, False


def sct(outcome: EpisodeOutcome, t_expert: Optional[float]) -> float:
    return sct_detail(outcome, t_expert)[0]


@dataclass(frozen=True)
class EpisodeRecord:
    """What aggregation needs from one episode."""

    family: str
    strategy: str
    n_s: int
    n_c: int
    config_index: int
    seed: int
    outcome: EpisodeOutcome
    t_expert: Optional[float]
    single_mbps: float = 0.0
    total_mbps: float = 0.0
    bytes_per_s_total: float = 0.0

    @classmethod
    def from_result(cls, result, t_expert: Optional[float]) -> "EpisodeRecord":
        bw = result.bandwidth
        return cls(result.family, result.strategy, result.n_s, result.n_c, result.config_index,
                   result.seed, result.outcome, t_expert, bw.single_vehicle_mbps, bw.total_mbps,
                   bw.total_bytes_per_s)


@dataclass(frozen=True)
class GroupStats:
    family: str
    strategy: str
    n_s: int
    n_c: int
    episodes: int
    successes: int
    collisions: int
    stagnations: int
    sr: float
    cr: float
    stagnation: float
    sct: float
    sct_capped: int
    single_mbps: float
    total_mbps: float
    bytes_per_s_total: float

    @property
    def key(self) -> tuple[str, str, int, int]:
        return (self.family, self.strategy, self.n_s, self.n_c)

    def csv_row(self) -> list[str]:
        return [self.family, self.strategy, str(self.n_s), str(self.n_c), str(self.episodes),
                f"{self.sr:.6f}", f"{self.sct:.6f}", f"{self.cr:.6f}", f"{self.stagnation:.6f}",
                f"{self.single_mbps:.6f}", f"{self.total_mbps:.6f}", f"{self.bytes_per_s_total:.3f}"]


@dataclass(frozen=True)
class CampaignResult:
    records: tuple[EpisodeRecord, ...]
    groups: tuple[GroupStats, ...]  # per family, then the average rows

    def group(self, family: str, strategy: str, n_s: int, n_c: int = 3) -> GroupStats:
        for g in self.groups:
            if g.key == (family, strategy, n_s, n_c):
                return g
        raise KeyError((family, strategy, n_s, n_c))

    def paired(self, a: tuple[str, int], b: tuple[str, int]) -> list[tuple[EpisodeRecord, EpisodeRecord]]:
        """Episodes of (strategy, N_s) ``a`` and ``b`` on identical (family, config, seed)."""
        def index(strategy, n_s):
            return {(r.family, r.config_index, r.seed): r for r in self.records
                    if r.strategy == strategy and r.n_s == n_s}
        ia, ib = index(*a), index(*b)
        return [(ia[k], ib[k]) for k in sorted(ia) if k in ib]


def _stats(key, recs: Sequence[EpisodeRecord]) -> GroupStats:
    n = len(recs)
    succ = sum(r.outcome.status is Status.SUCCESS for r in recs)
    coll = sum(r.outcome.status is Status.COLLISION for r in recs)
    stag = n - succ - coll
    scores = [sct_detail(r.outcome, r.t_expert) for r in recs]
    capped = sum(c for _, c in scores)
    return GroupStats(*key, n, succ, coll, stag, succ / n, coll / n, stag / n,
                      sum(s for s, _ in scores) / n, capped,
                      sum(r.single_mbps for r in recs) / n,
                      sum(r.total_mbps for r in recs) / n,
                      sum(r.bytes_per_s_total for r in recs) / n)


def _average(strategy: str, n_s: int, n_c: int, rows: Sequence[GroupStats]) -> GroupStats:
    k = len(rows)

    def mean(attr):
        return sum(getattr(g, attr) for g in rows) / k

    return GroupStats(AVERAGE, strategy, n_s, n_c, sum(g.episodes for g in rows),
                      sum(g.successes for g in rows), sum(g.collisions for g in rows),
                      sum(g.stagnations for g in rows), mean("sr"), mean("cr"),
                      mean("stagnation"), mean("sct"), sum(g.sct_capped for g in rows),
                      mean("single_mbps"), mean("total_mbps"), mean("bytes_per_s_total"))


def aggregate(records: Iterable[EpisodeRecord],
              families: Optional[Sequence[str]] = None) -> CampaignResult:
    """Group by (family, strategy, N_s, N_c) and add an unweighted per-family average row.

    ``families`` lists groups that were expected; any of them without
    episodes is skipped with a warning.
    """
    records = tuple(records)
    buckets: dict[tuple, list[EpisodeRecord]] = defaultdict(list)
    for r in records:
        buckets[(r.family, r.strategy, r.n_s, r.n_c)].append(r)
    fams = list(families) if families is not None else sorted({k[0] for k in buckets})
    variants = sorted({k[1:] for k in buckets})
    groups: list[GroupStats] = []
    for fam in fams:
        for var in variants:
            recs = buckets.get((fam,) + var)
            if not recs:
                log.warning("no episodes for %s %s N_s=%d N_c=%d; group skipped", fam, *var)
                continue
            groups.append(_stats((fam,) + var, recs))
    for var in variants:
        rows = [g for g in groups if (g.strategy, g.n_s, g.n_c) == var]
        if rows:
            groups.append(_average(*var, rows))
    capped = sum(g.sct_capped for g in groups if g.family != AVERAGE)
    if capped:
        log.warning("SCT capped at 1.0 in %d episodes that beat the expert", capped)
    return CampaignResult(records, tuple(groups))


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sided Welch t statistic and p-value.

    Binary outcomes are fine as input. Two constant samples with equal means
    give (0, 1); constant samples with different means have no defined
    statistic and raise.
    """
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise ValueError("each sample needs at least two values")
    ma, mb = sum(a) / na, sum(b) / nb
    va = sum((x - ma) ** 2 for x in a) / (na - 1)
    vb = sum((x - mb) ** 2 for x in b) / (nb - 1)
    qa, qb = va / na, vb / nb
    se2 = qa + qb
    if se2 == 0.0:
        if ma == mb:
            return 0.0, 1.0
        raise ValueError("both samples are constant with different means")
    t = (ma - mb) / math.sqrt(se2)
    df = se2 ** 2 / (qa ** 2 / (na - 1) + qb ** 2 / (nb - 1))
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return t, min(p, 1.0)


def expert_times(records: Iterable[EpisodeRecord]) -> Mapping[tuple[str, int, int], float]:
    """Oracle completion time per (family, config, seed), successes only."""
    return {(r.family, r.config_index, r.seed): r.outcome.completion_time for r in records
            if r.strategy == "Oracle" and r.outcome.status is Status.SUCCESS}
