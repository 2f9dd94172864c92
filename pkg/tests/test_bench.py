import json

import numpy as np
import pytest

from nlicp import bench
from nlicp.bench import (
    BASELINE,
    COLUMNS,
    GRIDS,
    BenchGrid,
    SimSetting,
    aggregate,
    draw_setting,
    intervention_targets,
    jaccard,
    random_baseline,
    read_results,
    rows_to_csv,
    run_benchmark,
    simulate,
    write_results,
)


def test_jaccard_examples():
    assert jaccard(set(), set()) == 1.0
    assert jaccard({3}, {3, 4, 5}) == pytest.approx(1 / 3)
    assert jaccard({1}, {3}) == 0.0
    assert jaccard(set(), {2}) == 0.0
    assert jaccard({1, 2}, {2, 1}) == 1.0


def test_close_interventions_for_a_root_target():
    for s in range(20):
        t = intervention_targets(1, "close", np.random.default_rng(s))
        assert len(t) == 1 and t[0] in (2, 3)


def test_all_interventions():
    assert intervention_targets(6, "all", np.random.default_rng(0)) == (1, 2, 3, 4, 5)


def test_rand_interventions_draw_one_ancestor_and_one_descendant():
    for s in range(20):
        a, d = intervention_targets(3, "rand", np.random.default_rng(s))
        assert a in (1, 2) and d in (4, 6)
    # node 5 has no ancestors, only the descendant 6
    assert intervention_targets(5, "rand", np.random.default_rng(0)) == (6,)


def test_draw_setting_overrides():
    s = draw_setting(0, 3, {"target": 1, "interv": "close"})
    assert s.target == 1 and s.targets_env2 and set(s.targets_env2) <= {2, 3}
    s = draw_setting(0, 4, {"target": 6, "interv": "all"})
    assert s.targets_env2 == s.targets_env3 == (1, 2, 3, 4, 5)
    s = draw_setting(0, 4, {"intervention_targets": [1]})
    assert s.targets_env2 == s.targets_env3 == (1,)
    with pytest.raises(ValueError):
        draw_setting(0, 0, {"colour": "red"})


def test_draw_setting_deterministic_and_on_grid():
    for i in range(30):
        a, b = draw_setting(11, i), draw_setting(11, i)
        assert a == b
        for k, grid in GRIDS.items():
            assert getattr(a, k) in grid
    assert any(draw_setting(11, i) != draw_setting(12, i) for i in range(5))


def test_setting_validation():
    s = draw_setting(0, 0)
    with pytest.raises(ValueError):
        SimSetting(**{**s.__dict__, "df": 4})
    with pytest.raises(ValueError):
        SimSetting(**{**s.__dict__, "n": 10})
    assert SimSetting(**{**s.__dict__, "n": 300}).n == 300


def test_parents_are_true_parents():
    assert draw_setting(0, 0, {"target": 6}).parents == {"X3", "X4", "X5"}
    assert draw_setting(0, 0, {"target": 1}).parents == frozenset()


def test_random_baseline():
    assert random_baseline(6, 2, 1e-12, 0) == frozenset()
    picks = {next(iter(random_baseline(6, 2, 1 - 1e-12, s))) for s in range(200)}
    assert picks == {1, 3, 4, 5, 6}
    empty = np.mean([random_baseline(6, 2, 0.05, s) == frozenset() for s in range(10_000)])
    assert 0.94 <= empty <= 0.96


def test_simulate_environment_counts():
    for i in range(10):
        s = draw_setting(5, i, {"n": 100})
        d = simulate(s, i)
        assert d.n == 100
        assert set(np.unique(d.env)) <= {1, 2, 3}
        assert d.target_name == f"X{s.target}"
        assert f"X{s.target}" not in d.columns and len(d.columns) == 5


def test_grid_from_mapping(tmp_path):
    p = tmp_path / "grid.json"
    p.write_text(json.dumps({"num_settings": 2, "reps": 1, "methods": ["quantile"], "overrides": {"n": 100}}))
    g = BenchGrid.load(p)
    assert g.methods == ("quantile",) and g.overrides == {"n": 100}
    with pytest.raises(ValueError):
        BenchGrid.from_mapping({"nonsense": 1})
    with pytest.raises(ValueError):
        BenchGrid(methods=("nope",))


def test_error_rows_are_kept(monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("solver failed")

    monkeypatch.setattr(bench, "run_icp", boom)
    g = BenchGrid(num_settings=2, reps=1, methods=("resid_gam_levene", BASELINE), overrides={"n": 100})
    rows = run_benchmark(g, 1)
    assert len(rows) == 4
    failed = [r for r in rows if r["error"]]
    assert len(failed) == 2 and all("solver failed" in r["error"] for r in failed)
    agg = {a["method"]: a for a in aggregate(rows)}
    assert agg["resid_gam_levene"]["errors"] == 2 and agg["resid_gam_levene"]["runs"] == 0
    assert agg[BASELINE]["errors"] == 0


def test_aggregate_means():
    rows = [
        {"method": "m", "error": "", "fwer_violation": True, "jaccard": 0.0, "target": 1},
        {"method": "m", "error": "", "fwer_violation": False, "jaccard": 1.0, "target": 1},
        {"method": "m", "error": "", "fwer_violation": False, "jaccard": 0.5, "target": 2},
    ]
    (a,) = aggregate(rows)
    assert a["runs"] == 3 and a["fwer"] == pytest.approx(1 / 3) and a["jaccard"] == pytest.approx(0.5)
    by = aggregate(rows, by=("target",))
    assert [r["target"] for r in by] == ["1", "2"]
    assert by[1]["jaccard"] == 0.5


def test_benchmark_table_roundtrip_and_determinism(tmp_path):
    g = BenchGrid(num_settings=3, reps=2, methods=("resid_gam_levene", BASELINE), overrides={"n": 100})
    rows = run_benchmark(g, 7)
    assert [tuple(r) for r in rows] == [COLUMNS] * len(rows)
    assert rows_to_csv(rows) == rows_to_csv(run_benchmark(g, 7))
    assert rows_to_csv(rows) == rows_to_csv(run_benchmark(g, 7, jobs=2))
    path = tmp_path / "res.csv"
    write_results(rows, path)
    back = read_results(path)
    assert len(back) == 12 and back[0]["fwer_violation"] in ("TRUE", "FALSE")
    assert aggregate(back) == aggregate(rows)
    for r in rows:
        assert r["fwer_violation"] == (not set(map(int, filter(None, r["s_hat"].split(";")))) <= set(
            map(int, filter(None, r["s_star"].split(";")))
        ))
