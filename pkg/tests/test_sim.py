import numpy as np
import pytest

from odlglm.engine import EngineConfig
from odlglm.prox import ProxConfig
from odlglm.metrics import group_metrics, standardized_errors, summarize
from odlglm.sim import (SimConfig, draw_covariates, generate_stream, replication_seed, run_all,
                        setting, worker_count)

TINY_ENGINE = EngineConfig(prox=ProxConfig(1.0, 1e-8, 20_000))


def tiny(**kw):
    base = dict(n_total=60, n_batches=3, p=8, s0=3, replications=3, seed=5,
                engine=TINY_ENGINE, report_at=(1, 2, 3))
    base.update(kw)
    return SimConfig(**base)


def test_ar_half_moments():
    x = draw_covariates(np.random.default_rng(1), 100_000, 3, "ar-half")
    assert np.var(x[:, 2]) == pytest.approx(1.0, abs=0.02)
    assert np.corrcoef(x[:, 1], x[:, 2])[0, 1] == pytest.approx(0.5, abs=0.01)
    assert np.corrcoef(x[:, 0], x[:, 2])[0, 1] == pytest.approx(0.25, abs=0.01)


def test_null_response_mean():
    cfg = SimConfig(n_total=100_000, n_batches=1, p=2, s0=0, replications=1)
    (b,) = generate_stream(cfg, 3)
    assert b.y.mean() == pytest.approx(0.5, abs=0.01)


def test_stream_deterministic():
    cfg = setting(1)
    a = generate_stream(cfg, replication_seed(7, 0))
    b = generate_stream(cfg, replication_seed(7, 0))
    c = generate_stream(cfg, replication_seed(7, 1))
    assert all(np.array_equal(u.X, v.X) and np.array_equal(u.y, v.y) for u, v in zip(a, b))
    assert not np.array_equal(a[0].X, c[0].X)
    assert [x.n for x in a] == [10] * 12 and a[0].p == 100


def test_design_and_groups():
    cfg = SimConfig(s0=5, p=10, n_total=20, n_batches=2)
    np.testing.assert_array_equal(cfg.true_beta()[:6], [1, 1, 1, 0.01, 0.01, 0])
    g = cfg.groups()
    assert g["1"].tolist() == [0, 1, 2] and g["0.01"].tolist() == [3, 4]
    assert len(g["0"]) == 5
    assert setting(2).p == 600 and setting(2).n_total == 624
    with pytest.raises(ValueError):
        setting(3)
    with pytest.raises(ValueError):
        SimConfig(sigma_kind="toeplitz")
    with pytest.raises(ValueError):
        SimConfig(n_total=10, batch_sizes=[3, 3])


def test_group_metric_definitions():
    est = np.array([[0.1, -0.2], [0.3, 0.4]])
    se = np.array([[0.5, 0.5], [0.1, 1.0]])
    z = 1.959964
    m = group_metrics(est, se, np.zeros(2), z)
    # coordinate means 0.2 and 0.1
    assert m["A.bias"] == pytest.approx(0.15)
    assert m["MAE"] == pytest.approx(0.25)
    assert m["ASE"] == pytest.approx(0.525)
    assert m["ESE"] == pytest.approx(np.mean([np.std([0.1, 0.3], ddof=1),
                                              np.std([-0.2, 0.4], ddof=1)]))
    assert m["CP"] == pytest.approx(0.75)
    assert m["ACL"] == pytest.approx(2 * z * 0.525)
    one = group_metrics(np.array([[0.1]]), np.array([[1.0]]), np.zeros(1), z)
    assert one["CP"] == 1.0 and np.isnan(one["ESE"])


def test_replications_reproducible_and_bounded(monkeypatch):
    cfg = tiny(include_mle=True, include_offline=True)
    first = summarize(cfg, run_all(cfg, workers=1))
    again = summarize(cfg, run_all(cfg, workers=2))
    assert first.to_json()["cells"] == again.to_json()["cells"]
    for key, cell in first.cells.items():
        assert 0 <= cell["CP"] <= 1 and cell["ACL"] >= 0
    assert ("mle", 3, "1") in first.cells and ("offline", 3, "0") in first.cells
    assert sum(first.lambda_hist[1].values()) == 3
    assert first.kkt["checked"] > 0
    z = standardized_errors(cfg, run_all(cfg, workers=1, reps=[0]))
    assert z.ndim == 1 and z.size <= 5


def test_single_replication_cp_is_binary():
    # s0=2 leaves one coordinate in each signal group
    cfg = tiny(replications=1, s0=2)
    table = summarize(cfg, run_all(cfg))
    for (method, b, g), cell in table.cells.items():
        if g != "0":
            assert cell["CP"] in (0.0, 1.0)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("ODL_THREADS", "1")
    assert worker_count(8) == 1
    monkeypatch.delenv("ODL_THREADS")
    assert worker_count(3) == 3


def test_other_variance_mode_matches_a_run_in_that_mode():
    cfg = tiny(replications=1)
    alt = tiny(replications=1,
               engine=EngineConfig(prox=TINY_ENGINE.prox, variance_mode="per-observation"))
    (a,) = run_all(cfg)
    (b,) = run_all(alt)
    np.testing.assert_array_equal(a.est, b.est)
    np.testing.assert_allclose(a.se_alt, b.se, rtol=1e-12)
    np.testing.assert_allclose(b.se_alt, a.se, rtol=1e-12)


def test_cache_reuses_and_extends(tmp_path, monkeypatch):
    import odlglm.sim as sim
    cfg = tiny(replications=2)
    first = run_all(cfg, cache_dir=tmp_path)
    assert len(list(tmp_path.glob("*/rep*.pkl"))) == 2

    def boom(*a, **k):
        raise AssertionError("recomputed a cached replication")

    monkeypatch.setattr(sim, "run_online", boom)
    again = run_all(cfg, cache_dir=tmp_path)
    for u, v in zip(first, again):
        np.testing.assert_array_equal(u.est, v.est)
    # more replications and comparison columns reuse the online part
    more = run_all(tiny(replications=2, include_mle=True), cache_dir=tmp_path)
    assert all(r.mle_beta is not None for r in more)
    assert run_all(tiny(replications=2), cache_dir=tmp_path)[0].mle_beta is not None


def test_cache_key_tracks_the_stream_not_the_count():
    from odlglm.sim import cache_key, source_fingerprint
    assert cache_key(tiny(replications=2)) == cache_key(tiny(replications=9, include_mle=True))
    assert cache_key(tiny(seed=1)) != cache_key(tiny(seed=2))
    assert source_fingerprint() == source_fingerprint()


@pytest.mark.parametrize("kind", ["identity", "ar-half"])
def test_population_information_against_sampling(kind):
    cfg = SimConfig(n_total=10, n_batches=1, p=5, s0=3, sigma_kind=kind, replications=1)
    rng = np.random.default_rng(11)
    x = draw_covariates(rng, 400_000, 5, kind)
    mu = 1 / (1 + np.exp(-x @ cfg.true_beta()))
    sampled = (x * (mu * (1 - mu))[:, None]).T @ x / x.shape[0]
    np.testing.assert_allclose(cfg.population_information(), sampled, atol=3e-3)


def test_population_projections_vanish_for_independent_nulls():
    from odlglm.sim import population_projections
    cfg = setting(1)
    g = population_projections(cfg, [0, 50])
    np.testing.assert_allclose(g[50], 0.0, atol=1e-14)
    # strong coordinates project onto each other
    assert np.abs(g[0][:2]).min() > 1e-3
