"""Subgradient descent runners and trajectory utilities.

One generic loop serves all three families: full-batch descent averages
per-sample subgradients, the one-pass runner consumes sample t at step t,
and the deterministic family needs no samples at all.  Iterates are indexed
1-based with w_1 = 0; a run of T iterates makes T-1 updates.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import OracleDomain, OutOfRange
from .instance_gd import grad_gd_batch
from .instance_sgd import grad_sgd
from .instance_smallstep import grad_smallstep


def project_ball(w):
    """Euclidean projection onto the unit ball: w / max(1, ||w||).

    Inside the ball this divides by exactly 1.0, which is bit-preserving,
    so projected and unprojected runs agree bitwise whenever the norms stay
    below one.
    """
    return w / max(1.0, float(np.linalg.norm(w)))


@dataclass(frozen=True)
class Trajectory:
    """Recorded iterates, shape (T, d), 1-based access."""

    iterates: np.ndarray

    @property
    def steps(self):
        return self.iterates.shape[0]

    @property
    def dim(self):
        return self.iterates.shape[1]

    def iterate(self, t):
        """Iterate w_t (1-based); read-only view."""
        if not 1 <= t <= self.steps:
            raise OutOfRange(f"iterate {t} not in [1, {self.steps}]")
        return self.iterates[t - 1]

    def suffix_average(self, m):
        return suffix_average(self, m)

    def save(self, basepath):
        save_trajectory(self, basepath)

    @classmethod
    def load(cls, basepath):
        return load_trajectory(basepath)


def suffix_average(trajectory, m):
    """Mean of the last m iterates; m = 1 returns w_T bitwise."""
    if not 1 <= m <= trajectory.steps:
        raise OutOfRange(f"suffix length {m} not in [1, {trajectory.steps}]")
    return trajectory.iterates[trajectory.steps - m:].mean(axis=0)


def gradient_descent(grad_fn, dim, steps, eta, projected=False, record=True):
    """Run steps-1 updates of w <- w - eta * grad_fn(t, w) from w = 0.

    grad_fn receives the 1-based step index t and the current iterate.
    Returns a Trajectory when record is true, else only the final iterate.
    Oracle-domain failures are re-raised with the step index attached.
    """
    w = np.zeros(dim)
    iterates = [w.copy()] if record else None
    for t in range(1, steps):
        try:
            g = grad_fn(t, w)
        except OracleDomain as exc:
            raise OracleDomain(f"update from iterate {t}: {exc}") from exc
        w = w - eta * g
        if projected:
            w = project_ball(w)
        if record:
            iterates.append(w.copy())
    if record:
        return Trajectory(iterates=np.array(iterates))
    return w


def run_gd(codebook, dataset, params, mode="oracle", projected=False, record=True):
    """Full-batch subgradient descent on the GD instance's empirical risk."""

    def grad(t, w):
        return grad_gd_batch(w, dataset, params, codebook, mode)

    return gradient_descent(
        grad, params.dim, params.steps, params.eta, projected=projected, record=record
    )


def run_sgd(codebook, dataset, params, mode="oracle", projected=False, record=True):
    """One-pass SGD on the sparse instance: update t consumes sample t.

    The pass makes n-1 updates, so the last sample is never consumed by the
    optimizer (it still counts toward the empirical risk).
    """
    if dataset.n < params.n:
        raise OutOfRange(
            f"dataset holds {dataset.n} samples; params.n={params.n}"
        )

    def grad(t, w):
        return grad_sgd(w, dataset.masks[t - 1], params, codebook, mode)

    return gradient_descent(
        grad, params.dim, params.n, params.eta, projected=projected, record=record
    )


def run_smallstep(params, projected=False, record=True):
    """Descent on the deterministic hinge (full-batch and one-pass agree)."""

    def grad(t, w):
        return grad_smallstep(w, params)

    return gradient_descent(
        grad, params.dim, params.steps, params.eta, projected=projected, record=record
    )


def save_trajectory(trajectory, basepath):
    """Write <basepath>.bin (little-endian float64, C order) plus a JSON
    sidecar <basepath>.json describing dtype and shape."""
    base = Path(basepath)
    arr = np.ascontiguousarray(trajectory.iterates, dtype="<f8")
    arr.tofile(base.with_suffix(".bin"))
    meta = {"dtype": "<f8", "order": "C", "shape": list(arr.shape)}
    base.with_suffix(".json").write_text(json.dumps(meta))


def load_trajectory(basepath):
    base = Path(basepath)
    meta = json.loads(base.with_suffix(".json").read_text())
    if meta.get("dtype") != "<f8" or meta.get("order") != "C":
        raise OutOfRange(f"unsupported checkpoint layout: {meta}")
    arr = np.fromfile(base.with_suffix(".bin"), dtype="<f8").reshape(meta["shape"])
    return Trajectory(iterates=arr)
