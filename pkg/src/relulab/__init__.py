"""Verification laboratory for the training dynamics of mildly parameterized
two-layer ReLU networks.

The package trains small ReLU networks under exactly specified
initializations and learning-rate schedules, tracks per-sample neuron
partitions along the trajectory, and emits machine-checkable certificates
comparing measured quantities (hitting times, Gram-matrix structure,
gradient and Hessian norms, loss-descent amounts, convergence envelopes,
closed-form population risks) against explicit theoretical bounds.
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
