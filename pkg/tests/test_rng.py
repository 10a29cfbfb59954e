import numpy as np

from conelrt.rng import (
    batch_jackknife_se,
    child_rng,
    mc_collect,
    mix64,
    normal_rows,
    resolve_workers,
)


def test_mix64_is_deterministic_and_spreads():
    a = mix64(12345, 0)
    assert a == mix64(12345, 0)
    vals = {mix64(12345, i) for i in range(1000)}
    assert len(vals) == 1000
    assert {mix64(s, 0) for s in range(1000)} != vals
    assert all(0 <= mix64(7, i) < 2 ** 64 for i in range(10))


def test_child_streams_reproducible_and_independent_of_order():
    a = child_rng(9, 3).standard_normal(5)
    b = child_rng(9, 3).standard_normal(5)
    np.testing.assert_array_equal(a, b)
    stacked = normal_rows(9, 0, 8, 5)
    np.testing.assert_array_equal(stacked[3], a)


def _sum_block(xi, start):
    return {"normsq": np.einsum("ij,ij->i", xi, xi)}, {"total": xi.sum(axis=0)}


def test_mc_collect_worker_invariance():
    per1, part1 = mc_collect(17, 1000, 42, _sum_block, workers=1)
    per4, part4 = mc_collect(17, 1000, 42, _sum_block, workers=4)
    np.testing.assert_array_equal(per1["normsq"], per4["normsq"])
    np.testing.assert_array_equal(part1["total"], part4["total"])


def test_mc_collect_per_rep_rows_do_not_depend_on_block_size():
    per_a, _ = mc_collect(5, 300, 7, _sum_block, block_size=64)
    per_b, _ = mc_collect(5, 300, 7, _sum_block, block_size=256)
    np.testing.assert_array_equal(per_a["normsq"], per_b["normsq"])


def test_batch_jackknife_matches_classic_se_for_the_mean():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(5000)
    se = batch_jackknife_se(x, np.mean, batches=100)
    classic = x.std(ddof=1) / np.sqrt(x.size)
    assert abs(se - classic) / classic < 0.15


def test_resolve_workers(monkeypatch):
    assert resolve_workers(3) == 3
    monkeypatch.setenv("CONELRT_WORKERS", "5")
    assert resolve_workers(None) == 5
    monkeypatch.delenv("CONELRT_WORKERS")
    assert resolve_workers(None) == 1
