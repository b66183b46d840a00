import math

import numpy as np
import pytest

from relulab.datasets import compute_gamma_constants, compute_V, gen_orthant_separable
from relulab.losses import loss_family
from relulab.models import InitSpec, grad_loss, init_binary, init_multi
from relulab.training import Constant, Full, TrainConfig, run, tstar
from relulab import certificates as C
from tests.conftest import make_onehot_dataset


def test_closed_series_matches_brute_force_and_reference():
    closed = C.descent_series_closed_form(0.01, 44)
    brute = C.descent_series_brute_force(0.01, 44)
    assert abs(closed - brute) <= 1e-14
    assert abs(closed - 0.19659127915806962) <= 1e-14


@pytest.mark.parametrize("eta,ts", [(0.005, 69), (0.002, 173), (0.001, 346)])
def test_closed_series_matches_brute_force_other_rates(eta, ts):
    assert C.descent_series_closed_form(eta, ts) == pytest.approx(
        C.descent_series_brute_force(eta, ts), abs=1e-14)


def test_phi_and_varphi_shapes():
    # phi has the fixed 251001/1500000 prefactor; varphi carries the
    # width/confidence-dependent lead and the 1/10^6 scaling.
    eta = 0.01
    base = 251001.0 * ((1 + 2 * eta) ** 2 - (1 - 2 * eta) ** 2)
    assert C.phi(1, eta) == pytest.approx(base / 1_500_000.0, rel=1e-15)
    lead = 0.5 + 2.0 * math.sqrt(math.log(2.0 * 400 / 0.01) / 10_000)
    assert C.varphi(1, eta, 20, 10_000, 0.01) == pytest.approx(
        lead * base / 1_000_000.0, rel=1e-15)


def test_descent_bound_binary_formula():
    consts = C.TheoryConstants(n=40, d=30, m=4096, delta=0.01,
                               gamma1=0.25, gamma2=0.33)
    tail = math.sqrt(8 * math.log(1600 / 0.01) / 4096)
    assert C.descent_bound_binary(consts) == pytest.approx(
        0.193 * (0.25 - 0.33 * tail) - 0.0111, rel=1e-15)
    assert C.descent_bound_multi() == 0.262533


def test_probability_budgets():
    b = C.probability_budget(
        C.TheoryConstants(n=40, d=30, m=4096, delta=1e-10), "binary_early")
    assert b == pytest.approx(1e-10 + 2 * 4096 * math.exp(-60), rel=1e-12)
    assert b < 1e-9
    bm = C.probability_budget(
        C.TheoryConstants(n=100, d=63, m=1000, delta=0.01, batch=64), "multi_early")
    assert bm == pytest.approx(0.01 + 4000 * math.exp(-32) + 1000 * 0.17 ** 64, rel=1e-12)


@pytest.fixture(scope="module")
def binary_run():
    ds = gen_orthant_separable(n=16, d=25, seed=9)
    net0 = init_binary(2048, 25, InitSpec(kappa=5e-6, seed=9))
    rec = run(net0, ds, loss_family("quadratic"), Constant(eta=0.01),
              TrainConfig(steps=45, batching=Full(), keep_params=True))
    g1, g2 = compute_gamma_constants(ds)
    consts = C.TheoryConstants(n=16, d=25, m=2048, delta=0.01, eta=0.01,
                               kappa=5e-6, gamma1=g1, gamma2=g2)
    return ds, rec, consts


def test_gram_cross_class_block_is_exactly_zero(binary_run):
    ds, rec, consts = binary_run
    for t in (1, 10, 44):
        G = C.gram_matrix(rec.nets[t], ds)
        rep = C.check_block_structure(G, ds)
        assert rep.passed
        cross = np.outer(ds.labels, ds.labels) < 0
        assert np.all(G[cross] == 0.0)


def test_gram_matrix_is_psd(binary_run):
    ds, rec, _ = binary_run
    G = C.gram_matrix(rec.nets[5], ds)
    assert float(np.linalg.eigvalsh(G)[0]) >= -1e-10 * float(np.trace(G))


def test_gram_matches_direct_per_sample_gradients(binary_run):
    ds, rec, _ = binary_run
    net = rec.nets[3]
    G = C.gram_matrix(net, ds)
    # Direct computation from per-sample prediction gradients.
    D = (ds.inputs @ net.B.T > 0).astype(float)
    S = np.maximum(ds.inputs @ net.B.T, 0.0)
    direct = np.zeros_like(G)
    for i in range(ds.n):
        for j in range(ds.n):
            co = D[i] * D[j]
            direct[i, j] = float(S[i] @ S[j]) + float(
                np.sum(co * net.a ** 2)) * float(ds.inputs[i] @ ds.inputs[j])
    assert np.allclose(G, direct, atol=1e-12)


def test_squared_gradient_norm_matches_gram_expansion(binary_run):
    ds, rec, _ = binary_run
    net = rec.nets[2]
    lf = loss_family("quadratic")
    g = grad_loss(net, ds, lf)
    lhs = float(g @ g)
    from relulab.models import forward
    e = forward(net, ds.inputs) - ds.labels
    G = C.gram_matrix(net, ds)
    rhs = float(e @ G @ e) / ds.n ** 2
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_multi_gram_entries_at_least_one(small_onehot_ds):
    ds = small_onehot_ds
    net0 = init_multi(128, ds.d, ds.num_classes, InitSpec(kappa=1e-4, seed=3))
    rec = run(net0, ds, loss_family("logistic"), Constant(eta=0.01),
              TrainConfig(steps=10, batching=Full(), keep_params=True))
    for t in (1, 5, 10):
        assert C.multi_gram_min_entry(rec.nets[t], ds) >= 1.0


def test_multi_gram_min_entry_matches_dense(small_onehot_ds):
    ds = small_onehot_ds
    net = init_multi(16, ds.d, ds.num_classes, InitSpec(kappa=0.2, seed=4))
    dense = C.gram_matrix(net, ds)
    assert C.multi_gram_min_entry(net, ds) == pytest.approx(
        float(dense.min()), rel=1e-12)


def test_hessian_certificates_on_trajectory(binary_run):
    ds, rec, _ = binary_run
    lf = loss_family("quadratic")
    for t in (0, 20, 44):
        rep = C.check_hessian_bound(rec.nets[t], ds, lf, "binary_early")
        assert rep.passed and rep.theoretical == pytest.approx(7 / (2 * 2048) + 2)


def test_convergence_envelope_reports():
    ds = gen_orthant_separable(n=12, d=25, seed=11)
    net0 = init_binary(512, 25, InitSpec(kappa=1e-5, seed=11))
    from relulab.training import LossInverse
    rec = run(net0, ds, loss_family("exp"), LossInverse(eta0=0.25, c=0.5),
              TrainConfig(steps=300, batching=Full(), trained_layers="input_only"))
    dc = compute_V(ds, 512, 0.01)
    rep = C.fit_convergence_rate(rec.records, "exponential", dc.V, 0.5)
    assert rep.passed and rep.slack >= 0.0


def test_gradient_lower_bound_global_form():
    assert C.gradient_lower_bound_global(0.3, 0.02) == pytest.approx(0.02 * 0.09)
