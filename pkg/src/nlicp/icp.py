"""Invariant causal prediction over subsets of candidate predictors."""

from __future__ import annotations

import itertools
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .citests import CITestConfig, cond_indep_test, resolve_method
from .citests._common import sub_seed
from .data import Dataset


@dataclass(frozen=True)
class IcpConfig:
    citest: CITestConfig = field(default_factory=CITestConfig)
    alpha: float = 0.05
    max_set_size: int | None = None
    candidates: tuple[str, ...] | None = None
    jobs: int = 1
    stop_when_empty: bool = False

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        resolve_method(self.citest.method)


@dataclass
class IcpResult:
    """Per-set p-values and the sets, intersection and defining sets they imply.

    P-values are cached, so results at another level come from
    ``accepted_at`` without re-running any test.
    """

    columns: tuple[str, ...]
    pvalues: dict[frozenset[str], float]
    alpha: float
    method: str
    config: IcpConfig
    stopped_early: bool = False

    def accepted_at(self, alpha: float) -> list[frozenset[str]]:
        return sorted(
            (s for s, p in self.pvalues.items() if p > alpha), key=lambda s: (len(s), sorted(s))
        )

    @property
    def accepted_sets(self) -> list[frozenset[str]]:
        return self.accepted_at(self.alpha)

    @property
    def s_hat(self) -> frozenset[str]:
        return intersection(self.accepted_sets)

    @property
    def defining_sets(self) -> list[frozenset[str]]:
        if self.stopped_early:
            raise RuntimeError("defining sets need the full family; rerun without stop_when_empty")
        return defining_sets(self.accepted_sets)

    @property
    def all_rejected(self) -> bool:
        return not self.accepted_sets


def intersection(family: Iterable[frozenset]) -> frozenset:
    """Intersection of a family of sets; empty when the family is empty."""
    family = list(family)
    if not family:
        return frozenset()
    return frozenset.intersection(*map(frozenset, family))


def defining_sets(family: Iterable[Iterable]) -> list[frozenset]:
    """All inclusion-minimal sets that intersect every member of ``family``.

    Searched breadth-first by size, so a candidate containing an
    already-found hitting set is never minimal and is skipped.  An empty
    family is hit by the empty set, which is returned alone; a family that
    contains the empty set cannot be hit and gives no defining sets.
    """
    fam = [frozenset(s) for s in family]
    if not fam:
        return [frozenset()]
    if any(len(s) == 0 for s in fam):
        return []
    ground = sorted(frozenset().union(*fam), key=repr)
    found: list[frozenset] = []
    for k in range(1, len(ground) + 1):
        for combo in itertools.combinations(ground, k):
            c = frozenset(combo)
            if any(f <= c for f in found):
                continue
            if all(c & s for s in fam):
                found.append(c)
    return sorted(found, key=lambda s: (len(s), sorted(map(repr, s))))


def _subsets(cands: Sequence[str], max_size: int):
    for k in range(0, max_size + 1):
        for combo in itertools.combinations(cands, k):
            yield frozenset(combo)


def _mask(subset: frozenset[str], cands: Sequence[str]) -> int:
    return sum(1 << i for i, c in enumerate(cands) if c in subset)


def run_icp(data: Dataset, config: IcpConfig | None = None) -> IcpResult:
    """Test invariance for every candidate subset up to ``max_set_size``.

    Each subset gets its own seed derived from the test seed and the
    subset's members, so results do not depend on ``jobs`` or on the
    order in which subsets are evaluated.
    """
    config = config or IcpConfig()
    cands = tuple(config.candidates) if config.candidates is not None else tuple(data.columns)
    if not cands:
        raise ValueError("no candidate predictors")
    for c in cands:
        data.column_index(c)
    p = len(cands)
    max_size = config.max_set_size
    if max_size is None:
        if p <= 12:
            max_size = p
        else:
            max_size = 4
            warnings.warn(f"{p} candidates: limiting subsets to size 4", RuntimeWarning)
    max_size = min(max_size, p)
    order = sorted(cands)

    def test(subset: frozenset[str]) -> float:
        cols = [data.column_index(c) for c in sorted(subset)]
        cfg = config.citest.with_(seed=sub_seed(config.citest.seed, _mask(subset, order)), alpha=config.alpha)
        return cond_indep_test(data.y, data.env, data.X[:, cols], cfg).p_value

    subsets = list(_subsets(order, max_size))
    pvalues: dict[frozenset[str], float] = {}
    stopped = False
    if config.stop_when_empty:
        running: frozenset | None = None
        for s in subsets:
            pvalues[s] = test(s)
            if pvalues[s] > config.alpha:
                running = s if running is None else running & s
                if not running:
                    stopped = True
                    break
    elif config.jobs > 1:
        with ThreadPoolExecutor(config.jobs) as pool:
            for s, pv in zip(subsets, pool.map(test, subsets)):
                pvalues[s] = pv
    else:
        for s in subsets:
            pvalues[s] = test(s)
    return IcpResult(
        columns=cands,
        pvalues=pvalues,
        alpha=config.alpha,
        method=resolve_method(config.citest.method),
        config=config,
        stopped_early=stopped,
    )


def format_set(s: Iterable[str]) -> str:
    items = sorted(s)
    return "{" + ", ".join(items) + "}"


def pvalue_table(result: IcpResult) -> list[tuple[str, float, bool]]:
    rows = sorted(result.pvalues.items(), key=lambda kv: (len(kv[0]), sorted(kv[0])))
    return [(format_set(s), float(p), bool(p > result.alpha)) for s, p in rows]


__all__ = [
    "IcpConfig",
    "IcpResult",
    "defining_sets",
    "format_set",
    "intersection",
    "pvalue_table",
    "run_icp",
]
