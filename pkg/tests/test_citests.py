import numpy as np
import pytest

from nlicp import citests
from nlicp.citests import ALIASES, METHODS, CITestConfig, CITestOutcome, cond_indep_test, resolve_method
from nlicp.icp import IcpConfig, run_icp
from nlicp.regress import ForestParams
from nlicp.scenarios import chain_example, residual_blind_example

SMALL_FOREST = ForestParams(num_trees=30)


def cfg(method, seed=0, **kw):
    kw.setdefault("forest", SMALL_FOREST)
    kw.setdefault("B", 50)
    return CITestConfig(method=method, seed=seed, **kw)


def rejection_rate(make_data, method, seeds, alpha=0.05, **kw):
    hits = 0
    for s in range(seeds):
        y, env, X = make_data(np.random.default_rng(10_000 + s))
        hits += cond_indep_test(y, env, X, cfg(method, seed=s, alpha=alpha, **kw)).reject
    return hits / seeds


def null_data(n, k=3):
    def make(rng):
        env = rng.integers(0, k, n)
        x = rng.standard_normal(n)
        return np.sin(x) + rng.standard_normal(n), env, x

    return make


def mean_shift_data(n, shift=2.0):
    def make(rng):
        env = rng.integers(0, 2, n)
        x = rng.standard_normal(n)
        return x + shift * env + rng.standard_normal(n), env, x

    return make


def chain_family_rate(method, seeds=50, **kw):
    """Share of seeds whose accepted family and intersection are ({X1}, {X1,X3}) and {X1}."""
    fam_hits = shat_hits = 0
    for s in range(seeds):
        res = run_icp(chain_example(s), IcpConfig(citest=cfg(method, seed=s, **kw)))
        fam_hits += set(res.accepted_sets) == {frozenset({"X1"}), frozenset({"X1", "X3"})}
        shat_hits += res.s_hat == frozenset({"X1"})
    return fam_hits / seeds, shat_hits / seeds


# --- configuration and dispatch -------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        CITestConfig(B=49)
    with pytest.raises(ValueError):
        CITestConfig(alpha=1.0)
    with pytest.raises(ValueError):
        CITestConfig(quantiles=(0.5, 1.0))


def test_aliases_resolve():
    for alias, name in ALIASES.items():
        assert resolve_method(alias) == name
        assert resolve_method(alias.lower()) == name
    with pytest.raises(ValueError):
        resolve_method("nope")


def test_outcome_reject_iff_p_le_alpha():
    assert CITestOutcome(0.05, 0.05, "x").reject
    assert not CITestOutcome(0.0501, 0.05, "x").reject
    assert CITestOutcome(1.7, 0.05, "x").p_value == 1.0


@pytest.fixture
def scripted(monkeypatch):
    """Register a fake single-env method that returns p-values from a queue."""
    queue = []

    def runner(prep, config):
        return CITestOutcome(queue.pop(0), config.alpha, "fake")

    monkeypatch.setitem(METHODS, "fake", (runner, False, True))
    return queue


@pytest.mark.parametrize("pv, expected", [((0.2, 0.03), 0.06), ((0.9, 0.8), 1.0)])
def test_bonferroni_over_env_columns(scripted, pv, expected):
    scripted.extend(pv)
    rng = np.random.default_rng(0)
    env = rng.integers(0, 2, (50, 2))
    out = cond_indep_test(rng.standard_normal(50), env, None, CITestConfig(method="fake"))
    assert out.p_value == pytest.approx(expected)
    assert out.correction == 2


def test_bonferroni_over_response_columns(scripted):
    scripted.extend([0.2, 0.03])
    rng = np.random.default_rng(0)
    out = cond_indep_test(rng.standard_normal((50, 2)), rng.integers(0, 2, 50), None, CITestConfig(method="fake"))
    assert out.p_value == pytest.approx(0.06)


def test_single_column_matches_direct_call():
    rng = np.random.default_rng(3)
    y, env, x = null_data(200)(rng)
    c = cfg("resid_gam_levene")
    direct = citests.residual_distribution_test(citests.prepare(y, env, x), c, "resid_gam_levene")
    assert cond_indep_test(y, env, x, c).p_value == direct.p_value


def test_categorical_methods_reject_continuous_env():
    rng = np.random.default_rng(0)
    for m in ("env_rf", "resid_gam_ks", "quantile"):
        with pytest.raises(ValueError):
            cond_indep_test(rng.standard_normal(100), rng.standard_normal(100), None, cfg(m))


def test_single_environment_rejected():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        cond_indep_test(rng.standard_normal(100), np.zeros(100, int), None, cfg("quantile"))


def test_non_finite_input():
    y = np.ones(60)
    y[3] = np.nan
    with pytest.raises(ValueError):
        cond_indep_test(y, np.arange(60) % 2, None, cfg("kci"))


def test_too_few_test_rows():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        cond_indep_test(rng.standard_normal(60), np.arange(60) % 2, None, cfg("env_rf"))


def test_residual_test_needs_two_per_env():
    rng = np.random.default_rng(0)
    env = np.r_[np.zeros(40, int), 1]
    with pytest.raises(ValueError):
        cond_indep_test(rng.standard_normal(41), env, None, cfg("resid_gam_ks"))


# --- invariances -------------------------------------------------------------------

FAST_METHODS = ["kci", "rp_poly", "env_rf", "target_gam_f", "target_rf_wilcoxon", "resid_rf_levene", "quantile"]


@pytest.mark.parametrize("method", FAST_METHODS)
def test_label_name_and_row_order_invariance(method):
    rng = np.random.default_rng(42)
    n = 150
    env = rng.integers(0, 3, n)
    x = rng.standard_normal((n, 2))
    y = x[:, 0] + 0.4 * env + rng.standard_normal(n)
    c = cfg(method, seed=5)
    base = cond_indep_test(y, env, x, c)
    names = np.array(["red", "green", "blue"])[env]
    assert cond_indep_test(y, names, x, c).p_value == base.p_value
    perm = rng.permutation(n)
    assert cond_indep_test(y[perm], env[perm], x[perm], c).p_value == base.p_value
    assert 0.0 <= base.p_value <= 1.0


@pytest.mark.parametrize("method", FAST_METHODS)
def test_deterministic_given_seed(method):
    rng = np.random.default_rng(1)
    y, env, x = null_data(150)(rng)
    assert cond_indep_test(y, env, x, cfg(method, seed=3)).p_value == cond_indep_test(y, env, x, cfg(method, seed=3)).p_value


# --- (A) kernel test ------------------------------------------------------------------


@pytest.mark.slow
def test_kci_level():
    def make(rng):
        return rng.standard_normal(300), rng.integers(0, 3, 300), None

    assert rejection_rate(make, "kci", 200) <= 0.07


def test_kci_perfect_dependence():
    rng = np.random.default_rng(0)
    env = rng.integers(0, 3, 200)
    assert cond_indep_test(env.astype(float), env, None, cfg("kci")).p_value < 0.01


def test_kci_continuous_env():
    rng = np.random.default_rng(0)
    e = rng.standard_normal(200)
    assert cond_indep_test(e + 0.1 * rng.standard_normal(200), e, None, cfg("kci")).p_value < 0.01


@pytest.mark.slow
def test_kci_chain():
    hits = 0
    for s in range(50):
        d = chain_example(s)
        p1 = cond_indep_test(d.y, d.env, d.X[:, [0]], cfg("kci", seed=s)).p_value
        p0 = cond_indep_test(d.y, d.env, None, cfg("kci", seed=s)).p_value
        hits += p1 > 0.05 and p0 <= 0.05
    assert hits / 50 >= 0.8


# --- (B) residual prediction ------------------------------------------------------------


@pytest.mark.slow
@pytest.mark.parametrize("sigma", [0.1, 1.0, 10.0])
def test_rp_level_any_sigma(sigma):
    def make(rng):
        n = 200
        env = rng.integers(0, 3, n)
        x = rng.standard_normal(n)
        return 1 + x - 0.5 * x**2 + sigma * rng.standard_normal(n), env, x

    assert rejection_rate(make, "rp_poly", 200) <= 0.08


def test_rp_scale_free_statistic():
    rng = np.random.default_rng(0)
    y, env, x = null_data(150)(rng)
    a = cond_indep_test(y, env, x, cfg("rp_poly", seed=2))
    b = cond_indep_test(1 + 7.0 * y, env, x, cfg("rp_poly", seed=2))
    assert a.p_value == b.p_value


@pytest.mark.slow
@pytest.mark.parametrize("method", ["rp_fourier", "rp_nystrom_rbf", "rp_nystrom_poly", "rp_poly"])
def test_rp_power_mean_shift(method):
    assert rejection_rate(mean_shift_data(500), method, 20) >= 0.9


def test_rp_b_validation():
    with pytest.raises(ValueError):
        cfg("rp_fourier", B=10)


@pytest.mark.slow
def test_rp_fourier_chain_family():
    family, s_hat = chain_family_rate("rp_fourier")
    print(f"rp_fourier chain: family {family:.2f}, s_hat {s_hat:.2f}")
    assert family >= 0.8 and s_hat >= 0.8


# --- (C) environment prediction --------------------------------------------------------------


@pytest.mark.slow
def test_env_rf_level():
    def make(rng):
        return rng.standard_normal(300), rng.integers(0, 3, 300), rng.standard_normal(300)

    assert rejection_rate(make, "env_rf", 200) <= 0.07


@pytest.mark.slow
def test_env_rf_power():
    hits = 0
    for s in range(40):
        rng = np.random.default_rng(s)
        env = rng.integers(0, 3, 600)
        x = rng.standard_normal(600)
        hits += cond_indep_test(env.astype(float), env, x, cfg("env_rf", seed=s)).p_value < 0.01
    assert hits / 40 >= 0.95


@pytest.mark.slow
def test_env_rf_chain_accepts_parents():
    acc = sum(
        cond_indep_test(chain_example(s).y, chain_example(s).env, chain_example(s).X[:, [0]], cfg("env_rf", seed=s)).p_value
        > 0.05
        for s in range(20)
    )
    assert acc / 20 >= 0.8


# --- (D) target prediction ---------------------------------------------------------------------

TARGET = ["target_gam_f", "target_gam_wilcoxon", "target_rf_f", "target_rf_wilcoxon"]


@pytest.mark.slow
@pytest.mark.parametrize("method", TARGET)
def test_target_level(method):
    assert rejection_rate(null_data(300), method, 200) <= 0.08


@pytest.mark.slow
@pytest.mark.parametrize("method", TARGET)
def test_target_power(method):
    # a 2-sigma shift, the same effect size as the residual-prediction power check
    assert rejection_rate(mean_shift_data(500, shift=2.0), method, 40) >= 0.9


def test_target_accepts_continuous_env():
    rng = np.random.default_rng(0)
    e = rng.standard_normal(300)
    out = cond_indep_test(e + 0.2 * rng.standard_normal(300), e, None, cfg("target_gam_f"))
    assert out.p_value < 0.01


# --- (E) residual distribution --------------------------------------------------------------

RESID = ["resid_gam_ks", "resid_gam_levene", "resid_rf_ks", "resid_rf_levene"]


@pytest.mark.slow
@pytest.mark.parametrize("method", RESID)
def test_residual_level(method):
    assert rejection_rate(null_data(300), method, 200) <= 0.08


@pytest.mark.parametrize("method", RESID)
def test_two_environments_single_subtest(method):
    rng = np.random.default_rng(0)
    y, env, x = null_data(200, k=2)(rng)
    out = cond_indep_test(y, env, x, cfg(method))
    assert out.diagnostics["t"] == 1 and out.correction == 1


def test_three_environments_three_subtests():
    rng = np.random.default_rng(0)
    y, env, x = null_data(200, k=3)(rng)
    out = cond_indep_test(y, env, x, cfg("resid_gam_ks"))
    assert out.diagnostics["t"] == 3
    assert out.p_value == pytest.approx(min(1, 3 * min(out.diagnostics["subtests"])))


def test_levene_combination_is_twice_min():
    rng = np.random.default_rng(1)
    y, env, x = null_data(200, k=3)(rng)
    d = cond_indep_test(y, env, x, cfg("resid_gam_levene")).diagnostics
    out = cond_indep_test(y, env, x, cfg("resid_gam_levene"))
    assert out.p_value == pytest.approx(min(1, 2 * min(d["p_wilcoxon"], d["p_levene"])))


@pytest.mark.slow
def test_residual_blind_spot():
    accepted = 0
    for s in range(50):
        d = residual_blind_example(s)
        accepted += cond_indep_test(d.y, d.env, d.X, cfg("resid_rf_ks", seed=s)).p_value > 0.05
    assert accepted / 50 >= 0.5


# --- (F) conditional quantiles -------------------------------------------------------------


@pytest.mark.slow
def test_quantile_level():
    assert rejection_rate(null_data(300), "quantile", 200) <= 0.08


def test_quantile_degenerate_exceedance():
    env = np.arange(80) % 2
    out = cond_indep_test(np.zeros(80), env, None, cfg("quantile"))
    assert out.p_value == 1.0
    assert any(f.startswith("degenerate_exceedance") for f in out.diagnostics["flags"])


def test_quantile_subtest_count():
    rng = np.random.default_rng(0)
    y, env, x = null_data(300, k=3)(rng)
    out = cond_indep_test(y, env, x, cfg("quantile"))
    assert out.diagnostics["t"] == 9
    y2, env2, x2 = null_data(300, k=2)(rng)
    assert cond_indep_test(y2, env2, x2, cfg("quantile")).diagnostics["t"] == 3


@pytest.mark.slow
def test_quantile_chain_family():
    family, s_hat = chain_family_rate("quantile")
    print(f"quantile chain: family {family:.2f}, s_hat {s_hat:.2f}")
    assert family >= 0.8 and s_hat >= 0.8
