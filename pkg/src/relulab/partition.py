"""Per-sample neuron partitions and checks on how they evolve during training.

For each sample i and neuron k, the partition cell is determined by the sign
agreement between the label and the output weight, and by whether the neuron
is active on the sample:

* TL (true-living):  y_i a_k > 0 and preactivation > 0
* TD (true-dead):    y_i a_k > 0 and preactivation <= 0
* FL (false-living): y_i a_k < 0 and preactivation > 0
* FD (false-dead):   y_i a_k < 0 and preactivation <= 0

Multi-output networks use y_i^T a_k in place of y_i a_k; under the
all-positive output-weight initialization only TL/TD occur, and the checker
verifies that positivity before relying on it.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .datasets import LabeledDataset
from .models import BinaryNet, MultiNet, Net
from .training import RunRecord

__all__ = [
    "TL", "TD", "FL", "FD",
    "PartitionSnapshot",
    "DynamicsViolation",
    "compute_partition",
    "initial_partition_stats",
    "check_dynamics_early",
    "check_dynamics_global",
    "check_correct_classification",
    "partition_counts_csv",
    "pack_partition_tables",
]

TL, TD, FL, FD = 0, 1, 2, 3
_CELL_NAMES = ("TL", "TD", "FL", "FD")


@dataclass(frozen=True)
class PartitionSnapshot:
    """Partition table at one step: table[i, k] in {TL, TD, FL, FD}."""

    step: int
    table: np.ndarray          # (n, m) uint8
    four_way: bool             # False when only TL/TD can occur (multi variant)

    def counts(self) -> np.ndarray:
        """Per-sample cell counts, shape (n, 4)."""
        n = self.table.shape[0]
        out = np.zeros((n, 4), dtype=np.int64)
        for cell in range(4):
            out[:, cell] = np.sum(self.table == cell, axis=1)
        return out

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(struct.pack("<q?", self.step, self.four_way))
        h.update(np.ascontiguousarray(self.table).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class DynamicsViolation:
    rule: str                  # S1..S5, StageII-S1..S5, CorrectClassification
    step: int
    sample: int                # -1 when not sample-specific
    neuron: int                # -1 when not neuron-specific
    detail: str


def compute_partition(net: Net, ds: LabeledDataset) -> PartitionSnapshot:
    """Classify every (sample, neuron) pair; strict > 0 for living, <= 0 for dead."""
    X = ds.inputs
    if isinstance(net, BinaryNet):
        if ds.label_kind != "binary":
            raise TypeError("binary network requires binary labels")
        if np.any(net.a == 0.0):
            k = int(np.where(net.a == 0.0)[0][0])
            raise ValueError(f"partition undefined: output weight a_{k} is exactly 0")
        agree = np.outer(ds.labels, net.a) > 0.0        # (n, m)
        living = (X @ net.B.T) > 0.0
        four_way = True
    else:
        if ds.label_kind != "onehot":
            raise TypeError("multi-output network requires one-hot labels")
        ya = ds.labels @ net.A.T                        # (n, m): y_i^T a_k
        if np.any(ya == 0.0):
            i, k = np.argwhere(ya == 0.0)[0]
            raise ValueError(f"partition undefined: y_{i}^T a_{k} is exactly 0")
        agree = ya > 0.0
        living = (X @ net.B.T + net.c[None, :]) > 0.0
        four_way = bool(np.any(~agree))
    table = np.where(agree, np.where(living, TL, TD), np.where(living, FL, FD))
    return PartitionSnapshot(step=0, table=table.astype(np.uint8), four_way=four_way)


def _snapshot_at(net: Net, ds: LabeledDataset, step: int) -> PartitionSnapshot:
    snap = compute_partition(net, ds)
    return PartitionSnapshot(step=step, table=snap.table, four_way=snap.four_way)


@dataclass(frozen=True)
class InitialPartitionStats:
    """Observed vs predicted initial co-activation fractions for same-class pairs."""

    bound: float
    max_deviation: float
    passed: bool
    worst_pair: tuple
    worst_cell: str


def initial_partition_stats(net0: BinaryNet, ds: LabeledDataset, delta: float) -> InitialPartitionStats:
    """Compare |TL_i(0) n TL_j(0)|/m (and the TD siblings) with the angular prediction.

    For a same-class pair with inner product rho, the predicted fraction is
    (pi - arccos(rho))/(4 pi) for TLnTL and TDnTD, and arccos(rho)/(4 pi) for
    the mixed intersections; deviations are compared against
    sqrt(log(n^2/delta)/(2m)).
    """
    if not isinstance(net0, BinaryNet):
        raise TypeError("initial partition statistics are defined for the binary network")
    snap = compute_partition(net0, ds)
    n, m = snap.table.shape
    x = ds.inputs
    gram = np.clip(x @ x.T, -1.0, 1.0)
    theta = np.arccos(gram)
    same = np.outer(ds.labels, ds.labels) > 0
    bound = float(np.sqrt(np.log(n * n / delta) / (2.0 * m)))
    is_tl = snap.table == TL
    is_td = snap.table == TD
    max_dev, worst_pair, worst_cell = -1.0, (-1, -1), ""
    combos = (
        ("TLnTL", is_tl, is_tl, (np.pi - theta) / (4.0 * np.pi)),
        ("TLnTD", is_tl, is_td, theta / (4.0 * np.pi)),
        ("TDnTL", is_td, is_tl, theta / (4.0 * np.pi)),
        ("TDnTD", is_td, is_td, (np.pi - theta) / (4.0 * np.pi)),
    )
    for name, left, right, predicted in combos:
        observed = (left.astype(np.float64) @ right.T.astype(np.float64)) / m
        dev = np.abs(observed - predicted)
        dev[~same] = -np.inf
        idx = np.unravel_index(int(np.argmax(dev)), dev.shape)
        if dev[idx] > max_dev:
            max_dev, worst_pair, worst_cell = float(dev[idx]), (int(idx[0]), int(idx[1])), name
    return InitialPartitionStats(bound=bound, max_deviation=max_dev,
                                 passed=max_dev <= bound,
                                 worst_pair=worst_pair, worst_cell=worst_cell)


# ---------------------------------------------------------------------------
# Dynamics checks
# ---------------------------------------------------------------------------

_SEGMENT_POINTS = 21   # evenly spaced interpolation points, endpoints included


def _segment_sign_violations(nets: Sequence[Net], ds: LabeledDataset, rule: str,
                             start_t: int = 1) -> List[DynamicsViolation]:
    """Check that preactivation signs are constant and nonzero along every
    parameter segment from step t to t+1 (t >= start_t), sampled at 21 points."""
    out: List[DynamicsViolation] = []
    X = ds.inputs
    lambdas = np.linspace(0.0, 1.0, _SEGMENT_POINTS)
    ref = None
    for t in range(start_t, len(nets) - 1):
        n0, n1 = nets[t], nets[t + 1]
        H0 = X @ n0.B.T
        H1 = X @ n1.B.T
        if isinstance(n0, MultiNet):
            H0 = H0 + n0.c[None, :]
            H1 = H1 + n1.c[None, :]
        if ref is None:
            # Reference sign pattern is the one at step 1 (first checked step).
            ref = np.sign(H0)
        for lam in lambdas:
            Hl = (1.0 - lam) * H0 + lam * H1
            bad = (np.sign(Hl) != ref) | (Hl == 0.0)
            if np.any(bad):
                i, k = np.argwhere(bad)[0]
                out.append(DynamicsViolation(
                    rule=rule, step=t, sample=int(i), neuron=int(k),
                    detail=f"preactivation sign changed along segment t={t}->{t+1} at lambda={lam:.2f}"))
                return out
    return out


def check_dynamics_early(nets: Sequence[Net], ds: LabeledDataset,
                         horizon: Optional[int] = None) -> List[DynamicsViolation]:
    """Early-stage partition dynamics over a trajectory of parameter states.

    Binary: TL and FD cells persist step to step (S1, S2); at the first step
    every TD cell flips to TL (S3) and every FL cell to FD (S4); from step 1
    on, preactivation signs are constant along every inter-step parameter
    segment (S5).  Multi-output: TL persists, TD flips to TL at the first
    step, and segment signs stay constant and positive from step 1 on.
    """
    if len(nets) < 2:
        return [DynamicsViolation("horizon", 0, -1, -1, "insufficient horizon: need at least steps 0 and 1")]
    if horizon is not None:
        nets = nets[:horizon + 1]
    snaps = [_snapshot_at(net, ds, t) for t, net in enumerate(nets)]
    out: List[DynamicsViolation] = []
    is_binary = isinstance(nets[0], BinaryNet)

    def record(rule, t, mask, detail):
        if np.any(mask):
            i, k = np.argwhere(mask)[0]
            out.append(DynamicsViolation(rule=rule, step=t, sample=int(i),
                                         neuron=int(k), detail=detail))

    for t in range(len(snaps) - 1):
        cur, nxt = snaps[t].table, snaps[t + 1].table
        record("S1", t, (cur == TL) & (nxt != TL), "true-living cell left TL at the next step")
        if is_binary:
            record("S2", t, (cur == FD) & (nxt != FD), "false-dead cell left FD at the next step")
    cur, nxt = snaps[0].table, snaps[1].table
    record("S3", 0, (cur == TD) & (nxt != TL), "true-dead cell did not turn true-living at the first step")
    if is_binary:
        record("S4", 0, (cur == FL) & (nxt != FD), "false-living cell did not turn false-dead at the first step")
    out.extend(_segment_sign_violations(nets, ds, rule="S5", start_t=1))
    if not is_binary:
        # Multi variant: after the first step every preactivation must be positive.
        X = ds.inputs
        for t in range(1, len(nets)):
            H = X @ nets[t].B.T + nets[t].c[None, :]
            record("S5", t, H <= 0.0, "nonpositive preactivation after the first step")
            break  # later steps are covered by the segment check
    return out


def check_dynamics_global(nets: Sequence[Net], ds: LabeledDataset) -> List[DynamicsViolation]:
    """Two-stage partition dynamics for the adaptive-rate runs.

    From step 1 on: |a_k| is non-decreasing (StageII-S1), TL and FD cells
    persist (S2, S3), every cell is TL or FD (S4), and preactivation signs
    are constant along inter-step segments (S5).
    """
    if len(nets) < 2:
        return [DynamicsViolation("horizon", 0, -1, -1, "insufficient horizon")]
    snaps = [_snapshot_at(net, ds, t) for t, net in enumerate(nets)]
    out: List[DynamicsViolation] = []

    def record(rule, t, mask, detail):
        if np.any(mask):
            where = np.argwhere(mask)[0]
            i, k = (int(where[0]), int(where[1])) if mask.ndim == 2 else (-1, int(where[0]))
            out.append(DynamicsViolation(rule=rule, step=t, sample=i, neuron=k, detail=detail))

    for t in range(1, len(nets) - 1):
        a_now = np.abs(nets[t].a)
        a_next = np.abs(nets[t + 1].a)
        record("StageII-S1", t, (a_next < a_now), "output-weight magnitude decreased")
        cur, nxt = snaps[t].table, snaps[t + 1].table
        record("StageII-S2", t, (cur == TL) & (nxt != TL), "true-living cell left TL")
        record("StageII-S3", t, (cur == FD) & (nxt != FD), "false-dead cell left FD")
    for t in range(1, len(nets)):
        tbl = snaps[t].table
        record("StageII-S4", t, (tbl != TL) & (tbl != FD), "cell outside TL/FD at step >= 1")
    out.extend(_segment_sign_violations(nets, ds, rule="StageII-S5", start_t=1))
    return out


def check_correct_classification(record: RunRecord):
    """First (t, min_margin) with a nonpositive margin at t >= 1, or None when all pass."""
    for r in record.records:
        if r.t >= 1 and r.min_margin <= 0.0:
            return (r.t, r.min_margin)
    return None


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def partition_counts_csv(snapshots: Sequence[PartitionSnapshot]) -> str:
    """Per-step, per-sample cell counts: t,sample,TL,TD,FL,FD."""
    buf = io.StringIO()
    buf.write("t,sample,TL,TD,FL,FD\n")
    for snap in snapshots:
        counts = snap.counts()
        for i in range(counts.shape[0]):
            tl, td, fl, fd = counts[i]
            buf.write(f"{snap.step},{i},{tl},{td},{fl},{fd}\n")
    return buf.getvalue()


def pack_partition_tables(snapshots: Sequence[PartitionSnapshot]) -> bytes:
    """Compact dump: JSON header line, then 2 bits per cell, row-major per snapshot."""
    import json
    if not snapshots:
        return b"{}\n"
    n, m = snapshots[0].table.shape
    header = json.dumps({"snapshots": len(snapshots), "n": n, "m": m,
                         "steps": [s.step for s in snapshots],
                         "cells": list(_CELL_NAMES)}).encode() + b"\n"
    chunks = [header]
    for snap in snapshots:
        flat = snap.table.ravel()
        pad = (-flat.size) % 4
        if pad:
            flat = np.concatenate([flat, np.zeros(pad, dtype=np.uint8)])
        quads = flat.reshape(-1, 4)
        packed = (quads[:, 0] | (quads[:, 1] << 2) | (quads[:, 2] << 4) | (quads[:, 3] << 6))
        chunks.append(packed.astype(np.uint8).tobytes())
    return b"".join(chunks)
