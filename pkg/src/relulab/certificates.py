"""Closed-form bounds and their comparison against measured quantities.

Every certificate returns a ``CertificateReport`` carrying the theoretical
value, the measured value, the pass verdict, and the slack.  Bounds whose
probability budget is vacuous are reported as inconclusive rather than
failed: they are probabilistic statements and an invalid budget makes the
comparison meaningless.

Two similar exponential envelopes appear in the early-stage analysis and are
deliberately kept as distinct named functions because they are easy to
conflate:

* ``phi(t, eta)``     = 251001((1+2eta)^{2t} - (1-2eta)^{2t}) / 1500000 —
  used inside the per-step descent series;
* ``varphi(t, ...)``  = (1/2 + 2 sqrt(log(2n^2/delta)/m)) *
  251001((1+2eta)^{2t} - (1-2eta)^{2t}) / 1000000 — the prediction envelope
  used in the early gradient lower bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .datasets import LabeledDataset
from .losses import LossFamily
from .models import BinaryNet, MultiNet, Net, hessian_spectral_norm, param_norm

__all__ = [
    "TheoryConstants",
    "CertificateReport",
    "phi",
    "varphi",
    "gram_matrix",
    "multi_gram_min_entry",
    "check_block_structure",
    "check_gram_lower_bound",
    "gradient_lower_bound_early",
    "gradient_lower_bound_global",
    "check_hessian_bound",
    "descent_bound_binary",
    "descent_bound_multi",
    "descent_series_closed_form",
    "descent_series_brute_force",
    "fit_convergence_rate",
    "probability_budget",
    "STOCHASTIC_ALIGNMENT_BOUND",
]

STOCHASTIC_ALIGNMENT_BOUND = 9801.0 / 10000.0


@dataclass(frozen=True)
class TheoryConstants:
    """All scalar inputs the certificates need; no silent defaults."""

    n: int
    d: int
    m: int
    delta: float
    eta: Optional[float] = None
    kappa: Optional[float] = None
    batch: Optional[int] = None
    num_classes: Optional[int] = None
    mu0: Optional[float] = None
    s: Optional[float] = None
    gamma: Optional[float] = None
    gamma1: Optional[float] = None
    gamma2: Optional[float] = None
    V: Optional[float] = None
    c: Optional[float] = None
    cprime: Optional[float] = None
    r: Optional[float] = None
    T0: Optional[int] = None


@dataclass(frozen=True)
class CertificateReport:
    cert_id: str
    theoretical: float
    measured: float
    passed: bool
    slack: float
    inconclusive: bool = False
    context: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "cert_id": self.cert_id,
            "theoretical": self.theoretical,
            "measured": self.measured,
            "passed": bool(self.passed),
            "slack": self.slack,
            "inconclusive": bool(self.inconclusive),
            "context": self.context,
        }


# ---------------------------------------------------------------------------
# Exponential envelopes
# ---------------------------------------------------------------------------

def phi(t: float, eta: float) -> float:
    """Descent-series envelope 251001((1+2eta)^{2t} - (1-2eta)^{2t}) / 1500000."""
    return 251001.0 * ((1.0 + 2.0 * eta) ** (2 * t) - (1.0 - 2.0 * eta) ** (2 * t)) / 1_500_000.0


def varphi(t: float, eta: float, n: int, m: int, delta: float) -> float:
    """Prediction envelope with the width-dependent leading factor."""
    lead = 0.5 + 2.0 * math.sqrt(math.log(2.0 * n * n / delta) / m)
    return lead * 251001.0 * ((1.0 + 2.0 * eta) ** (2 * t) - (1.0 - 2.0 * eta) ** (2 * t)) / 1_000_000.0


# ---------------------------------------------------------------------------
# Gram matrices
# ---------------------------------------------------------------------------

def gram_matrix(net: Net, ds: LabeledDataset) -> np.ndarray:
    """G_ij = <model gradient at x_i, model gradient at x_j>.

    For the binary network this is the n x n matrix
    sum_k sigma_ik sigma_jk + sum_k a_k^2 D_ik D_jk x_i^T x_j.
    For the multi-output network, the (Cn) x (Cn) block matrix with blocks
    indexed by output channel is returned, laid out as (i*C + alpha).
    """
    X = ds.inputs
    if isinstance(net, BinaryNet):
        H = X @ net.B.T
        S = np.maximum(H, 0.0)
        M = (H > 0.0).astype(np.float64) * net.a[None, :]
        return S @ S.T + (M @ M.T) * (X @ X.T)
    H = X @ net.B.T + net.c[None, :]
    S = np.maximum(H, 0.0)
    D = (H > 0.0).astype(np.float64)
    n, m, C = ds.n, net.m, net.C
    # Entry ((i,alpha),(j,beta)) = delta_{alpha beta} sum_k S_ik S_jk
    #   + (x_i^T x_j + 1) sum_k a_{k alpha} a_{k beta} D_ik D_jk.
    G = np.zeros((n * C, n * C))
    SS = S @ S.T
    XX1 = X @ X.T + 1.0
    for i in range(n):
        Di = D[i]
        for j in range(i, n):
            block = (net.A.T * (Di * D[j])[None, :]) @ net.A * XX1[i, j]
            block = block + np.eye(C) * SS[i, j]
            G[i * C:(i + 1) * C, j * C:(j + 1) * C] = block
            G[j * C:(j + 1) * C, i * C:(i + 1) * C] = block.T
    return G


def multi_gram_min_entry(net: MultiNet, ds: LabeledDataset) -> float:
    """Exact minimum entry of the (Cn) x (Cn) model-gradient Gram matrix.

    A conservative per-pair lower bound is computed first with two n x n
    matrix products; the exact C x C block is evaluated only for pairs whose
    bound does not already clear the running minimum.  The result is exact.
    """
    X = ds.inputs
    H = X @ net.B.T + net.c[None, :]
    S = np.maximum(H, 0.0)
    D = (H > 0.0).astype(np.float64)
    XX1 = X @ X.T + 1.0
    amin = net.A.min(axis=1)
    if np.any(amin < 0.0) or np.any(XX1 < 0.0):
        # Conservative shortcut invalid; fall back to the dense form.
        return float(gram_matrix(net, ds).min())
    E = D * amin[None, :]
    SS = S @ S.T
    # Off-diagonal-channel entries have no S-term, so the safe per-pair lower
    # bound ignores it: bound_ij <= min_{alpha,beta} block_{alpha beta}.
    bound = (E @ E.T) * XX1
    order = np.dstack(np.unravel_index(np.argsort(bound, axis=None), bound.shape))[0]
    exact_min = math.inf
    A = net.A
    eye = np.eye(net.C)
    for i, j in order:
        if bound[i, j] >= exact_min:
            break
        block = (A.T * (D[i] * D[j])[None, :]) @ A * XX1[i, j] + eye * SS[i, j]
        exact_min = min(exact_min, float(block.min()))
    return float(exact_min) if math.isfinite(exact_min) else float(bound.min())


def check_block_structure(G: np.ndarray, ds: LabeledDataset) -> CertificateReport:
    """Every cross-class entry of the binary Gram matrix must be exactly 0.0."""
    y = ds.labels
    cross = np.outer(y, y) < 0
    bad = np.argwhere(cross & (G != 0.0))
    worst = float(np.max(np.abs(G[cross]))) if np.any(cross) else 0.0
    return CertificateReport(
        cert_id="gram-cross-class-zero",
        theoretical=0.0, measured=worst,
        passed=bad.size == 0, slack=-worst,
        context={} if bad.size == 0 else {"pair": bad[0].tolist()},
    )


def check_gram_lower_bound(G: np.ndarray, ds: LabeledDataset,
                           consts: TheoryConstants) -> CertificateReport:
    """Binary same-class entries: G_ij >= (999/1000) x_i^T x_j ((pi - arccos)/pi - sqrt(8 log(n^2/delta)/m))."""
    x, y = ds.inputs, ds.labels
    gram = np.clip(x @ x.T, -1.0, 1.0)
    tail = math.sqrt(8.0 * math.log(consts.n ** 2 / consts.delta) / consts.m)
    bound = 0.999 * gram * ((np.pi - np.arccos(gram)) / np.pi - tail)
    same = np.outer(y, y) > 0
    slack = (G - bound)[same]
    worst = float(np.min(slack))
    idx = np.argwhere(same)[int(np.argmin(slack))]
    return CertificateReport(
        cert_id="gram-same-class-lower",
        theoretical=float(bound[tuple(idx)]), measured=float(G[tuple(idx)]),
        passed=worst >= 0.0, slack=worst,
        context={"pair": idx.tolist()},
    )


# ---------------------------------------------------------------------------
# Gradient bounds
# ---------------------------------------------------------------------------

def gradient_lower_bound_early(t: int, consts: TheoryConstants) -> float:
    """Early-stage squared-gradient lower bound
    (999/1000)(1 - varphi(t))^2 (gamma1 - gamma2 sqrt(8 log(n^2/delta)/m))."""
    v = varphi(t, consts.eta, consts.n, consts.m, consts.delta)
    tail = math.sqrt(8.0 * math.log(consts.n ** 2 / consts.delta) / consts.m)
    return 0.999 * (1.0 - v) ** 2 * (consts.gamma1 - consts.gamma2 * tail)


def gradient_lower_bound_global(loss: float, V: float) -> float:
    """Late-stage bound: squared gradient norm at least V * loss^2."""
    return V * loss * loss


# ---------------------------------------------------------------------------
# Hessian bounds
# ---------------------------------------------------------------------------

def check_hessian_bound(net: Net, ds: LabeledDataset, loss: LossFamily,
                        regime: str, loss_at_point: Optional[float] = None,
                        dense_limit: int = 1200) -> CertificateReport:
    """Spectral norm of the risk Hessian against the regime's closed-form cap.

    Regimes: ``binary_early`` (7/(2m)+2), ``multi_early`` (25/(4m)+2 sqrt 2),
    ``global`` ((norm(theta)^2+1) L), ``input_only`` (L).
    """
    if regime == "binary_early":
        cap = 7.0 / (2.0 * net.m) + 2.0
        layers = "all"
    elif regime == "multi_early":
        cap = 25.0 / (4.0 * net.m) + 2.0 * math.sqrt(2.0)
        layers = "all"
    elif regime == "global":
        if loss_at_point is None:
            raise ValueError("global regime needs the loss value at the point")
        cap = (param_norm(net) ** 2 + 1.0) * loss_at_point
        layers = "all"
    elif regime == "input_only":
        if loss_at_point is None:
            raise ValueError("input-only regime needs the loss value at the point")
        cap = loss_at_point
        layers = "input_only"
    else:
        raise ValueError(f"unknown Hessian regime {regime!r}")
    measured = hessian_spectral_norm(net, ds, loss, trained_layers=layers,
                                     dense_limit=dense_limit)
    return CertificateReport(
        cert_id=f"hessian-{regime}",
        theoretical=cap, measured=measured,
        passed=measured <= cap, slack=cap - measured,
        context={"regime": regime},
    )


# ---------------------------------------------------------------------------
# Descent bounds
# ---------------------------------------------------------------------------

def descent_bound_binary(consts: TheoryConstants) -> float:
    """Early total descent bound 0.193(gamma1 - gamma2 sqrt(8 log(n^2/delta)/m)) - 0.0111."""
    tail = math.sqrt(8.0 * math.log(consts.n ** 2 / consts.delta) / consts.m)
    return 0.193 * (consts.gamma1 - consts.gamma2 * tail) - 0.0111


def descent_bound_multi() -> float:
    """Early total descent bound for the mini-batch multi-output setting."""
    return 0.262533


def descent_series_closed_form(eta: float, t_star: int) -> float:
    """Closed form of sum_{t=1}^{T*-1} eta (1 - phi(t))^2 via geometric sums."""
    a = 251001.0 / 1_500_000.0
    up = (1.0 + 2.0 * eta) ** 2
    dn = (1.0 - 2.0 * eta) ** 2
    mix = up * dn
    T = t_star

    def geo(q: float) -> float:
        # sum_{t=1}^{T-1} q^t
        return (q - q ** T) / (1.0 - q)

    # Expand (1 - a(u^t - v^t))^2 with u = up^t, v = dn^t and sum each
    # geometric series separately.
    total = (T - 1) - 2.0 * a * geo(up) + 2.0 * a * geo(dn) \
        + a * a * geo(up * up) + a * a * geo(dn * dn) - 2.0 * a * a * geo(mix)
    return eta * total


def descent_series_brute_force(eta: float, t_star: int) -> float:
    """Direct term-by-term evaluation of sum_{t=1}^{T*-1} eta (1 - phi(t))^2."""
    return math.fsum(eta * (1.0 - phi(t, eta)) ** 2 for t in range(1, t_star))


# ---------------------------------------------------------------------------
# Convergence-rate envelopes
# ---------------------------------------------------------------------------

def fit_convergence_rate(records, kind: str, V: float, c: float) -> CertificateReport:
    """Check the per-step loss envelope of an adaptive-rate run.

    ``kind``: ``poly_stage1`` checks L(t) <= L(1)/t^{Vc/2};
    ``exponential`` checks L(t) <= (1 - Vc/2)^{t-1} L(1).  Also reports the
    least-squares fitted decay for diagnostics.
    """
    pts = [(r.t, r.loss) for r in records if r.t >= 1]
    if not pts:
        raise ValueError("no records at t >= 1")
    L1 = dict(pts).get(1)
    if L1 is None:
        raise ValueError("record at t = 1 required")
    rate = V * c / 2.0
    worst_slack, worst_t = math.inf, None
    for t, L in pts:
        if kind == "poly_stage1":
            env = L1 / t ** rate
        elif kind == "exponential":
            env = (1.0 - rate) ** (t - 1) * L1
        else:
            raise ValueError(f"unknown envelope kind {kind!r}")
        slack = env - L
        if slack < worst_slack:
            worst_slack, worst_t = slack, t
    ts = np.array([t for t, L in pts if L > 0], dtype=np.float64)
    Ls = np.array([L for _, L in pts if L > 0], dtype=np.float64)
    if kind == "poly_stage1":
        fit = float(np.polyfit(np.log(ts), np.log(Ls), 1)[0]) if len(ts) > 1 else math.nan
    else:
        fit = float(np.polyfit(ts, np.log(Ls), 1)[0]) if len(ts) > 1 else math.nan
    return CertificateReport(
        cert_id=f"rate-{kind}",
        theoretical=rate, measured=fit,
        passed=worst_slack >= 0.0, slack=worst_slack,
        context={"worst_t": worst_t, "fitted_decay": fit},
    )


# ---------------------------------------------------------------------------
# Probability budgets
# ---------------------------------------------------------------------------

def probability_budget(consts: TheoryConstants, regime: str) -> float:
    """Total failure probability of the regime's event stack.

    ``binary_early``: delta + 2 m e^{-2d};
    ``multi_early``:  delta + 4 m e^{-(d+1)/2} + m 0.17^B.
    """
    if regime == "binary_early":
        return consts.delta + 2.0 * consts.m * math.exp(-2.0 * consts.d)
    if regime == "multi_early":
        if consts.batch is None:
            raise ValueError("multi_early budget needs the batch size")
        return (consts.delta + 4.0 * consts.m * math.exp(-(consts.d + 1) / 2.0)
                + consts.m * 0.17 ** consts.batch)
    raise ValueError(f"unknown budget regime {regime!r}")
