"""Simulation benchmark on the six-node graph: draw settings, run ICP, score FWER and Jaccard."""

from __future__ import annotations

import csv
import io
import json
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .citests import CITestConfig, resolve_method
from .data import Dataset
from .icp import IcpConfig, run_icp
from .regress import ForestParams
from .scm import (
    DF_GRID,
    InterventionSpec,
    Mechanism,
    NoiseSpec,
    StructuralCausalModel,
    figure7_dag,
    sample_dataset,
)

GRIDS: dict[str, tuple] = {
    "n": (100, 200, 500, 2000, 5000),
    "target": (1, 2, 3, 4, 5, 6),
    "df": DF_GRID,
    "multiplic": (False, True),
    "shift": (False, True),
    "strength": (0, 0.1, 0.2, 0.5, 1, 2, 5, 10),
    "meanshift": (0, 0.1, 0.2, 0.5, 1, 2, 5, 10),
    "id": (1, 2, 3, 4),
    "interv": ("all", "rand", "close"),
}
BASELINE = "random_baseline"


@dataclass(frozen=True)
class SimSetting:
    index: int
    n: int
    target: int
    df: int
    multiplic: bool
    shift: bool
    strength: float
    meanshift: float
    id: int
    interv: str
    targets_env2: tuple[int, ...]
    targets_env3: tuple[int, ...]

    def __post_init__(self):
        # sample size may leave its grid (any n >= 20) so single datasets can be simulated at will
        if int(self.n) != self.n or self.n < 20:
            raise ValueError(f"n must be an integer >= 20, got {self.n!r}")
        for name, grid in GRIDS.items():
            if name != "n" and getattr(self, name) not in grid:
                raise ValueError(f"{name}={getattr(self, name)!r} is outside its grid {grid}")

    @property
    def parents(self) -> frozenset[str]:
        return frozenset(f"X{k}" for k in figure7_dag().parents(self.target))


def _seq(*tags: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(t) & 0xFFFFFFFF for t in tags])


def _pick(rng: np.random.Generator, options: Sequence) -> Any:
    return options[int(rng.integers(0, len(options)))]


def intervention_targets(target: int, interv: str, rng: np.random.Generator) -> tuple[int, ...]:
    """Nodes intervened on in one environment."""
    dag = figure7_dag()
    if interv == "all":
        return tuple(k for k in range(1, dag.num_nodes + 1) if k != target)
    if interv == "rand":
        near, far = dag.ancestors(target), dag.descendants(target)
    elif interv == "close":
        near, far = dag.parents(target), dag.children(target)
    else:
        raise ValueError(f"unknown intervention location {interv!r}")
    chosen = [_pick(rng, sorted(group)) for group in (near, far) if group]
    return tuple(sorted(chosen))


def draw_setting(master_seed: int, index: int, overrides: Mapping[str, Any] | None = None) -> SimSetting:
    """Draw one setting uniformly from the grids.

    ``overrides`` maps a grid name to a single value or to a list of
    allowed values.  The key ``intervention_targets`` fixes the intervened
    nodes of both interventional environments.  Intervention targets come
    from their own random stream, so restricting a grid never changes them
    for a fixed location type.
    """
    overrides = dict(overrides or {})
    fixed_targets = overrides.pop("intervention_targets", None)
    unknown = set(overrides) - set(GRIDS)
    if unknown:
        raise ValueError(f"unknown setting override(s) {sorted(unknown)}")
    rng = np.random.default_rng(_seq(master_seed, index, 0))
    values = {}
    for name, grid in GRIDS.items():
        allowed = overrides.get(name, grid)
        if isinstance(allowed, (str, bytes)) or not isinstance(allowed, Iterable):
            allowed = (allowed,)
        values[name] = _pick(rng, tuple(allowed))
    if fixed_targets is not None:
        t = tuple(sorted(int(k) for k in fixed_targets))
        if values["target"] in t:
            raise ValueError("the response node cannot be intervened on")
        t2 = t3 = t
    else:
        trng = np.random.default_rng(_seq(master_seed, index, 1))
        t2 = intervention_targets(values["target"], values["interv"], trng)
        t3 = intervention_targets(values["target"], values["interv"], trng)
    return SimSetting(index=index, targets_env2=t2, targets_env3=t3, **values)


def jaccard(s_hat: Iterable, s_star: Iterable) -> float:
    a, b = set(s_hat), set(s_star)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def random_baseline(p: int, target: int, alpha: float, seed: int) -> frozenset[int]:
    """Empty set with probability ``1 - alpha``, else one uniformly drawn non-target node."""
    if p < 2:
        raise ValueError("need p >= 2")
    rng = np.random.default_rng(seed)
    if rng.random() >= alpha:
        return frozenset()
    others = [k for k in range(1, p + 1) if k != target]
    return frozenset({_pick(rng, others)})


def simulate(setting: SimSetting, seed) -> Dataset:
    """Sample the three-environment dataset of a setting."""
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(setting.n, [1 / 3] * 3)
    kind = "shift" if setting.shift else "do"
    plan = [None] + [
        InterventionSpec(
            kind=kind,
            targets=frozenset(t),
            strength=setting.strength,
            meanshift=setting.meanshift,
            df=setting.df,
        )
        for t in (setting.targets_env2, setting.targets_env3)
    ]
    scm = StructuralCausalModel.uniform(
        figure7_dag(),
        Mechanism(setting.id, "multiplicative" if setting.multiplic else "additive"),
        NoiseSpec("student_t", df=setting.df),
    )
    return sample_dataset(scm, setting.target, plan, counts, rng)


@dataclass(frozen=True)
class BenchGrid:
    """What to run.  ``overrides`` restricts the setting grids (see ``draw_setting``)."""

    num_settings: int = 40
    reps: int = 5
    methods: tuple[str, ...] = ("env_rf", "resid_gam_levene", "quantile")
    alpha: float = 0.05
    overrides: dict[str, Any] = field(default_factory=lambda: {"n": [100, 200, 500]})
    B: int = 100
    num_trees: int = 100

    def __post_init__(self):
        if not self.methods:
            raise ValueError("need at least one method")
        for m in self.methods:
            if m != BASELINE:
                resolve_method(m)
        if self.num_settings < 1 or self.reps < 1:
            raise ValueError("num_settings and reps must be positive")

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> "BenchGrid":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown grid key(s) {sorted(unknown)}")
        kw = dict(raw)
        if "methods" in kw:
            kw["methods"] = tuple(kw["methods"])
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "BenchGrid":
        return cls.from_mapping(json.loads(Path(path).read_text()))


COLUMNS = (
    "setting", "rep", "method", "n", "target", "df", "multiplic", "shift", "strength",
    "meanshift", "id", "interv", "targets_env2", "targets_env3",
    "s_hat", "s_star", "fwer_violation", "jaccard", "error",
)  # fmt: skip


def _fmt_nodes(nodes: Iterable) -> str:
    return ";".join(str(k) for k in sorted(nodes))


def _node(name: str) -> int:
    return int(name.lstrip("X"))


def _method_tag(method: str) -> int:
    return zlib.crc32(method.encode())


def run_one(setting: SimSetting, rep: int, method: str, grid: BenchGrid, master_seed: int) -> dict:
    """One (setting, repetition, method) cell; failures become error rows."""
    row: dict[str, Any] = {
        "setting": setting.index,
        "rep": rep,
        "method": method,
        **{k: getattr(setting, k) for k in GRIDS},
        "targets_env2": _fmt_nodes(setting.targets_env2),
        "targets_env3": _fmt_nodes(setting.targets_env3),
        "s_star": _fmt_nodes(_node(c) for c in setting.parents),
    }
    s_star = {_node(c) for c in setting.parents}
    seed = int(_seq(master_seed, setting.index, 3, rep, _method_tag(method)).generate_state(1)[0])
    try:
        if method == BASELINE:
            s_hat = set(random_baseline(6, setting.target, grid.alpha, seed))
        else:
            data = simulate(setting, _seq(master_seed, setting.index, 2, rep))
            cfg = IcpConfig(
                citest=CITestConfig(
                    method=method, seed=seed, B=grid.B, forest=ForestParams(num_trees=grid.num_trees)
                ),
                alpha=grid.alpha,
            )
            s_hat = {_node(c) for c in run_icp(data, cfg).s_hat}
    except Exception as exc:  # noqa: BLE001 - recorded, never dropped
        row.update(s_hat="", fwer_violation="", jaccard="", error=f"{type(exc).__name__}: {exc}")
        return {c: row[c] for c in COLUMNS}
    row.update(
        s_hat=_fmt_nodes(s_hat),
        fwer_violation=not s_hat <= s_star,
        jaccard=round(jaccard(s_hat, s_star), 12),
        error="",
    )
    return {c: row[c] for c in COLUMNS}


def _run_task(args) -> dict:
    return run_one(*args)


def run_benchmark(grid: BenchGrid, master_seed: int, *, jobs: int = 1, progress=None) -> list[dict]:
    """Every (setting, rep, method) cell, sorted; a pure function of the seed and grid."""
    settings = [draw_setting(master_seed, i, grid.overrides) for i in range(grid.num_settings)]
    tasks = [(s, r, m, grid, master_seed) for s in settings for r in range(grid.reps) for m in grid.methods]
    rows = []
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            for row in pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * jobs))):
                rows.append(row)
                if progress:
                    progress(len(rows), len(tasks))
    else:
        for t in tasks:
            rows.append(_run_task(t))
            if progress:
                progress(len(rows), len(tasks))
    rows.sort(key=lambda r: (r["setting"], r["rep"], grid.methods.index(r["method"])))
    return rows


def _cell(v) -> str:
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    return str(v)


def rows_to_csv(rows: Sequence[Mapping[str, Any]], columns: Sequence[str] | None = None) -> str:
    columns = list(columns or (rows[0].keys() if rows else COLUMNS))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r[c]) for c in columns])
    return buf.getvalue()


def write_results(rows: Sequence[Mapping[str, Any]], path: str | Path) -> None:
    Path(path).write_text(rows_to_csv(rows, COLUMNS))


def read_results(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def aggregate(rows: Iterable[Mapping[str, Any]], by: Sequence[str] = ()) -> list[dict]:
    """Per-method (and per-stratum) means of FWER violations and Jaccard similarity.

    Error rows are left out of the means and counted in ``errors``.
    """
    groups: dict[tuple, dict[str, list]] = {}
    for r in rows:
        key = (str(r["method"]), *(str(r[b]) for b in by))
        g = groups.setdefault(key, {"fwer": [], "jac": [], "errors": 0})
        if r["error"]:
            g["errors"] += 1
            continue
        g["fwer"].append(float(r["fwer_violation"] in (True, "TRUE", "True")))
        g["jac"].append(float(r["jaccard"]))
    out = []
    for key in sorted(groups, key=lambda k: tuple((0, float(x)) if _numeric(x) else (1, x) for x in k)):
        g = groups[key]
        m = len(g["fwer"])
        fwer = float(np.mean(g["fwer"])) if m else math.nan
        jac = float(np.mean(g["jac"])) if m else math.nan
        out.append(
            {
                "method": key[0],
                **dict(zip(by, key[1:])),
                "runs": m,
                "errors": g["errors"],
                "fwer": fwer,
                "fwer_se": math.sqrt(fwer * (1 - fwer) / m) if m else math.nan,
                "jaccard": jac,
                "jaccard_se": float(np.std(g["jac"], ddof=1) / math.sqrt(m)) if m > 1 else math.nan,
            }
        )
    return out


def _numeric(x: str) -> bool:
    try:
        float(x)
    except ValueError:
        return False
    return True
