"""Independent numerical oracles used to validate the analytic code paths.

Nothing in here is used by the training or certificate machinery itself;
these routines exist so that tests can compare every closed form against an
independent computation (central finite differences, brute-force summation,
Monte-Carlo estimation).
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .datasets import LabeledDataset
from .losses import LossFamily
from .models import BinaryNet, MultiNet, Net, flatten_params, loss_value

__all__ = [
    "fd_gradient",
    "fd_hessian_vector",
    "unflatten_like",
    "loss_of_flat",
    "min_preactivation_gap",
]


def unflatten_like(net: Net, flat: np.ndarray) -> Net:
    """Rebuild a network of the same shape from a flat parameter vector."""
    if isinstance(net, BinaryNet):
        m, d = net.m, net.d
        return BinaryNet(a=flat[:m].copy(), B=flat[m:].reshape(m, d).copy())
    m, d, C = net.m, net.d, net.C
    return MultiNet(A=flat[:m * C].reshape(m, C).copy(),
                    B=flat[m * C:m * C + m * d].reshape(m, d).copy(),
                    c=flat[m * C + m * d:].copy())


def loss_of_flat(net: Net, ds: LabeledDataset, loss: LossFamily) -> Callable[[np.ndarray], float]:
    """Empirical risk as a function of the flat parameter vector."""
    def f(flat: np.ndarray) -> float:
        return loss_value(unflatten_like(net, flat), ds, loss)
    return f


def fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient."""
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def fd_hessian_vector(f: Callable[[np.ndarray], float], x: np.ndarray, v: np.ndarray,
                      h: float = 1e-5) -> np.ndarray:
    """Central finite-difference Hessian-vector product via gradient differences."""
    def grad(y: np.ndarray) -> np.ndarray:
        return fd_gradient(f, y, h=1e-6)
    return (grad(x + h * v) - grad(x - h * v)) / (2.0 * h)


def min_preactivation_gap(net: Net, ds: LabeledDataset) -> float:
    """Smallest |preactivation| over all (sample, neuron) pairs.

    Finite-difference comparisons are only meaningful at kink-free points:
    every preactivation magnitude must exceed several times the step h.
    """
    H = ds.inputs @ net.B.T
    if isinstance(net, MultiNet):
        H = H + net.c[None, :]
    return float(np.min(np.abs(H)))
