import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relulab.datasets import gen_orthant_separable
from relulab.losses import loss_family
from relulab.models import InitSpec, init_binary, init_multi
from relulab.partition import (
    FD,
    FL,
    TD,
    TL,
    check_correct_classification,
    check_dynamics_early,
    check_dynamics_global,
    compute_partition,
    initial_partition_stats,
    pack_partition_tables,
    partition_counts_csv,
)
from relulab.training import Constant, Full, LossInverse, TrainConfig, run
from tests.conftest import make_onehot_dataset


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_partition_is_exclusive_and_exhaustive(seed):
    ds = gen_orthant_separable(n=8, d=6, seed=seed)
    net = init_binary(16, 6, InitSpec(kappa=0.1, seed=seed))
    snap = compute_partition(net, ds)
    assert snap.table.shape == (8, 16)
    assert np.all((snap.table >= TL) & (snap.table <= FD))
    # Cross-check one cell against the definitions.
    agree = np.outer(ds.labels, net.a) > 0
    living = ds.inputs @ net.B.T > 0
    expected = np.where(agree, np.where(living, TL, TD), np.where(living, FL, FD))
    assert np.array_equal(snap.table, expected.astype(np.uint8))


def test_partition_counts_sum_to_width(small_binary_ds, small_binary_net):
    snap = compute_partition(small_binary_net, small_binary_ds)
    counts = snap.counts()
    assert counts.shape == (small_binary_ds.n, 4)
    assert np.all(counts.sum(axis=1) == small_binary_net.m)


def test_multi_partition_is_two_way_under_positive_outputs(small_onehot_ds, small_multi_net):
    snap = compute_partition(small_multi_net, small_onehot_ds)
    # All-positive output weights and one-hot labels: every neuron is "true".
    assert not snap.four_way
    assert np.all((snap.table == TL) | (snap.table == TD))


def test_initial_partition_fractions_match_angular_prediction():
    ds = gen_orthant_separable(n=16, d=25, seed=1)
    net0 = init_binary(8192, 25, InitSpec(kappa=1e-5, seed=1))
    stats = initial_partition_stats(net0, ds, delta=0.01)
    assert stats.passed, (stats.max_deviation, stats.bound)
    assert stats.max_deviation <= stats.bound


def _compliant_binary_run(seed, steps=45):
    ds = gen_orthant_separable(n=16, d=25, seed=seed)
    net0 = init_binary(2048, 25, InitSpec(kappa=5e-6, seed=seed))
    rec = run(net0, ds, loss_family("quadratic"), Constant(eta=0.01),
              TrainConfig(steps=steps, batching=Full(), keep_params=True))
    return ds, rec


def test_early_dynamics_clean_on_compliant_run():
    ds, rec = _compliant_binary_run(seed=2)
    assert check_dynamics_early(rec.nets, ds) == []


def test_early_dynamics_negative_control_reports_violations():
    ds = gen_orthant_separable(n=16, d=25, seed=3)
    net0 = init_binary(2048, 25, InitSpec(kappa=5e-6, seed=3))
    rec = run(net0, ds, loss_family("quadratic"), Constant(eta=10.0),
              TrainConfig(steps=6, batching=Full(), keep_params=True))
    assert len(check_dynamics_early(rec.nets, ds)) >= 1


def test_early_dynamics_insufficient_horizon():
    ds = gen_orthant_separable(n=8, d=6, seed=4)
    net0 = init_binary(64, 6, InitSpec(kappa=1e-4, seed=4))
    violations = check_dynamics_early([net0], ds)
    assert len(violations) == 1
    assert violations[0].rule == "horizon"
    assert "insufficient horizon" in violations[0].detail


def test_global_dynamics_clean_on_adaptive_run():
    ds = gen_orthant_separable(n=12, d=25, seed=5)
    net0 = init_binary(1024, 25, InitSpec(kappa=1e-5, seed=5))
    rec = run(net0, ds, loss_family("exp"), LossInverse(eta0=0.25, c=0.5),
              TrainConfig(steps=200, batching=Full(), trained_layers="input_only",
                          keep_params=True))
    assert check_dynamics_global(rec.nets, ds) == []
    assert check_correct_classification(rec) is None


def test_counts_csv_and_packed_tables(small_binary_ds, small_binary_net):
    snaps = [compute_partition(small_binary_net, small_binary_ds)]
    csv = partition_counts_csv(snaps)
    lines = csv.strip().split("\n")
    assert lines[0] == "t,sample,TL,TD,FL,FD"
    assert len(lines) == 1 + small_binary_ds.n
    blob = pack_partition_tables(snaps)
    header_end = blob.index(b"\n")
    assert header_end > 0
    payload = blob[header_end + 1:]
    # Two bits per cell, packed.
    cells = small_binary_ds.n * small_binary_net.m
    assert len(payload) == (2 * cells + 7) // 8


def test_partition_rejects_exactly_zero_output_weight(small_binary_ds):
    net = init_binary(4, small_binary_ds.d, InitSpec(kappa=0.1, seed=0))
    broken = type(net)(a=np.where(np.arange(4) == 0, 0.0, net.a), B=net.B)
    with pytest.raises(ValueError):
        compute_partition(broken, small_binary_ds)
