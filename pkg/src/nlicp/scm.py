"""Structural causal models over a signed DAG and data sampled from them.

Node indices are 1-based, matching how graphs are usually drawn.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset

DF_GRID = (2, 3, 5, 10, 20, 50, 100)


def nonlinearity(fid: int):
    if fid == 1:
        return lambda x: x
    if fid == 2:
        return lambda x: np.maximum(0.0, x)
    if fid == 3:
        return lambda x: np.sign(x) * np.sqrt(np.abs(x))
    if fid == 4:
        return lambda x: np.sin(2 * np.pi * x)
    raise ValueError(f"nonlinearity id must be 1..4, got {fid}")


@dataclass(frozen=True)
class Dag:
    num_nodes: int
    edges: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        if self.num_nodes < 1:
            raise ValueError("a DAG needs at least one node")
        seen = set()
        for a, b, s in self.edges:
            if not (1 <= a <= self.num_nodes and 1 <= b <= self.num_nodes):
                raise ValueError(f"edge {a}->{b} has a node outside 1..{self.num_nodes}")
            if s not in (-1, 1):
                raise ValueError("edge signs must be +1 or -1")
            if (a, b) in seen:
                raise ValueError(f"duplicate edge {a}->{b}")
            seen.add((a, b))
        self.topological_order()

    def parents(self, k: int) -> list[int]:
        return sorted(a for a, b, _ in self.edges if b == k)

    def children(self, k: int) -> list[int]:
        return sorted(b for a, b, _ in self.edges if a == k)

    def sign(self, parent: int, child: int) -> int:
        for a, b, s in self.edges:
            if a == parent and b == child:
                return s
        raise KeyError((parent, child))

    def _closure(self, k: int, step) -> list[int]:
        out: set[int] = set()
        frontier = [k]
        while frontier:
            for j in step(frontier.pop()):
                if j not in out:
                    out.add(j)
                    frontier.append(j)
        return sorted(out)

    def ancestors(self, k: int) -> list[int]:
        return self._closure(k, self.parents)

    def descendants(self, k: int) -> list[int]:
        return self._closure(k, self.children)

    def topological_order(self) -> list[int]:
        indeg = {k: 0 for k in range(1, self.num_nodes + 1)}
        for _, b, _ in self.edges:
            indeg[b] += 1
        ready = sorted(k for k, v in indeg.items() if v == 0)
        order = []
        while ready:
            k = ready.pop(0)
            order.append(k)
            for c in self.children(k):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
            ready.sort()
        if len(order) != self.num_nodes:
            raise ValueError("graph has a cycle")
        return order


def figure7_dag() -> Dag:
    """The six-node benchmark graph with its signed unit-weight edges."""
    return Dag(6, ((1, 2, 1), (1, 3, 1), (2, 3, -1), (3, 4, -1), (3, 6, 1), (4, 6, -1), (5, 6, 1)))


@dataclass(frozen=True)
class NoiseSpec:
    distribution: str = "student_t"
    df: float = 100
    scale: float = 1.0

    def __post_init__(self):
        if self.distribution not in ("student_t", "standard_normal"):
            raise ValueError(f"unknown noise distribution {self.distribution!r}")
        if self.scale <= 0:
            raise ValueError("noise scale must be positive")
        if self.distribution == "student_t" and self.df not in DF_GRID:
            raise ValueError(f"df must be one of {DF_GRID}")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.distribution == "standard_normal":
            return self.scale * rng.standard_normal(size)
        return self.scale * rng.standard_t(self.df, size)


@dataclass(frozen=True)
class Mechanism:
    nonlinearity_id: int = 1
    composition: str = "additive"

    def __post_init__(self):
        nonlinearity(self.nonlinearity_id)
        if self.composition not in ("additive", "multiplicative"):
            raise ValueError("composition must be 'additive' or 'multiplicative'")


def eval_mechanism(parent_values, signs, mech: Mechanism):
    """Combine signed parent values through the node's nonlinearity.

    Works row-wise when ``parent_values`` is ``(n, k)``.
    """
    z = np.asarray(parent_values, dtype=float)
    s = np.asarray(signs, dtype=float)
    if z.shape[-1] != s.shape[-1]:
        raise ValueError("parent_values and signs differ in length")
    if s.shape[-1] < 1:
        raise ValueError("need at least one parent")
    f = nonlinearity(mech.nonlinearity_id)(z * s)
    out = f.sum(axis=-1) if mech.composition == "additive" else f.prod(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class InterventionSpec:
    """Interventions applied to every row of one environment.

    Values are either given explicitly in ``values`` or drawn once per node
    as ``strength * (t_df + meanshift)``.
    """

    kind: str = "shift"
    targets: frozenset[int] = frozenset()
    strength: float = 1.0
    meanshift: float = 0.0
    df: float = 100
    values: Mapping[int, float] | None = None

    def __post_init__(self):
        if self.kind not in ("do", "shift"):
            raise ValueError("intervention kind must be 'do' or 'shift'")
        if self.strength < 0:
            raise ValueError("strength must be nonnegative")
        object.__setattr__(self, "targets", frozenset(int(t) for t in self.targets))


@dataclass(frozen=True)
class StructuralCausalModel:
    dag: Dag
    mechanisms: tuple[Mechanism, ...]
    noises: tuple[NoiseSpec, ...]

    def __post_init__(self):
        q = self.dag.num_nodes
        if len(self.mechanisms) != q or len(self.noises) != q:
            raise ValueError("need one mechanism and one noise spec per node")

    @classmethod
    def uniform(cls, dag: Dag, mechanism: Mechanism, noise: NoiseSpec) -> "StructuralCausalModel":
        q = dag.num_nodes
        return cls(dag, (mechanism,) * q, (noise,) * q)

    def sample_nodes(
        self,
        env_plan: Sequence[InterventionSpec | None],
        per_env_counts: Sequence[int],
        seed: int | np.random.Generator,
    ) -> tuple[np.ndarray, np.ndarray, dict]:
        """Sample all nodes; returns ``(Z, env_labels, drawn_values)``.

        Rows are grouped by environment (labels 1, 2, ...).  Noise is drawn
        for every node before the intervention values, so intervention
        settings never change the noise draws.
        """
        if len(env_plan) != len(per_env_counts):
            raise ValueError("need one count per environment")
        if env_plan and env_plan[0] is not None and env_plan[0].targets:
            raise ValueError("environment 1 must be observational")
        if any(c < 0 for c in per_env_counts):
            raise ValueError("counts must be nonnegative")
        q = self.dag.num_nodes
        for spec in env_plan:
            if spec is None:
                continue
            bad = [t for t in spec.targets if not 1 <= t <= q]
            if bad:
                raise ValueError(f"intervention on undefined node(s) {bad}")

        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        n = int(sum(per_env_counts))
        env = np.repeat(np.arange(1, len(per_env_counts) + 1), per_env_counts)
        noise = np.column_stack([self.noises[k].sample(rng, n) for k in range(q)])

        drawn: dict[tuple[int, int], float] = {}
        for e, spec in enumerate(env_plan, start=1):
            if spec is None:
                continue
            for k in sorted(spec.targets):
                if spec.values is not None and k in spec.values:
                    drawn[(e, k)] = float(spec.values[k])
                else:
                    t = rng.standard_t(spec.df)
                    drawn[(e, k)] = float(spec.strength * (t + spec.meanshift))

        Z = np.zeros((n, q))
        for k in self.dag.topological_order():
            pa = self.dag.parents(k)
            col = noise[:, k - 1].copy()
            if pa:
                signs = [self.dag.sign(j, k) for j in pa]
                col += eval_mechanism(Z[:, [j - 1 for j in pa]], signs, self.mechanisms[k - 1])
            for e, spec in enumerate(env_plan, start=1):
                if spec is None or k not in spec.targets:
                    continue
                rows = env == e
                if spec.kind == "do":
                    col[rows] = drawn[(e, k)]
                else:
                    col[rows] += drawn[(e, k)]
            Z[:, k - 1] = col
        return Z, env, drawn


def sample_dataset(
    scm: StructuralCausalModel,
    target: int,
    env_plan: Sequence[InterventionSpec | None],
    per_env_counts: Sequence[int],
    seed: int | np.random.Generator,
) -> Dataset:
    """Sample a dataset whose response is node ``target``.

    Predictor columns keep the node numbering (``X1``, ``X2``, ...) with the
    target column removed.
    """
    q = scm.dag.num_nodes
    if not 1 <= target <= q:
        raise ValueError(f"target must be in 1..{q}")
    Z, env, _ = scm.sample_nodes(env_plan, per_env_counts, seed)
    keep = [k for k in range(1, q + 1) if k != target]
    return Dataset(
        X=Z[:, [k - 1 for k in keep]],
        y=Z[:, target - 1],
        env=env,
        columns=[f"X{k}" for k in keep],
        target_name=f"X{target}",
    )
