"""Deterministic round-robin family: one fixed loss, no sampling at all.

The loss is a hinge over coordinates,

    f(w) = max(0, max_i 1/sqrt(d) - w[i] - eta*i/(4d)),   i = 1..d,

with dimension d chosen so that gradient steps never run out of fresh
coordinates.  The tilt eta*i/(4d) strictly orders the coordinates, so the
active coordinate at step t is exactly t (each step bumps one coordinate by
eta and sends the argmax to the next one), the argmax gap stays eta/(4d),
and the final value is known in closed form.  Since the distribution is a
point mass, the empirical and population risks coincide and full-batch and
one-sample updates are the same algorithm.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import OutOfRange


@dataclass(frozen=True)
class SmallstepParams:
    """Step size, step count, and (derived) dimension of the hinge family.

    Parameters
    ----------
    eta : float
        Step size.
    steps : int
        Number of iterates T (so T-1 updates).
    dim : int, optional
        Coordinate count; defaults to max(ceil(25 eta^2 T^2), 1), enough
        that the round-robin never wraps.
    """

    eta: float
    steps: int
    dim: int = None

    def __post_init__(self):
        if self.eta <= 0 or self.steps < 1:
            raise OutOfRange(
                f"need eta > 0 and steps >= 1; got eta={self.eta}, steps={self.steps}"
            )
        if self.dim is None:
            object.__setattr__(
                self, "dim", max(math.ceil(25.0 * self.eta**2 * self.steps**2), 1)
            )
        if self.dim < 1:
            raise OutOfRange(f"dim must be positive; got {self.dim}")

    @property
    def smoothing_delta(self):
        """Smoothing radius the argmax gap tolerates: eta/(16 d)."""
        return self.eta / (16.0 * self.dim)

    @property
    def argmax_margin(self):
        """Designed value gap between the best and runner-up coordinate."""
        return self.eta / (4.0 * self.dim)

    @property
    def risk_threshold(self):
        """Final-value lower bound this family is built to certify."""
        return min(0.25, 1.0 / (20.0 * self.eta * self.steps))

    @property
    def tilts(self):
        """Per-coordinate offsets eta*i/(4d), i = 1..d."""
        return self.eta * np.arange(1, self.dim + 1) / (4.0 * self.dim)


def loss_smallstep(w, params):
    """Hinge value at w; w may be batched with shape (..., d)."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape[-1] != params.dim:
        raise OutOfRange(f"expected {params.dim} coordinates, got {w.shape[-1]}")
    vals = 1.0 / math.sqrt(params.dim) - w - params.tilts
    return np.maximum(0.0, vals.max(axis=-1))


def grad_smallstep(w, params):
    """Subgradient at a single point: -e_j at the lowest maximizing
    coordinate when the hinge is active, zero otherwise."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1:
        raise OutOfRange("grad_smallstep expects a single point, not a batch")
    vals = 1.0 / math.sqrt(params.dim) - w - params.tilts
    j = int(np.argmax(vals))
    g = np.zeros_like(w)
    if vals[j] > 0.0:
        g[j] = -1.0
    return g


if __name__ == "__main__":
    params = SmallstepParams(eta=0.02, steps=100)
    w = np.zeros(params.dim)
    for _ in range(params.steps - 1):
        w = w - params.eta * grad_smallstep(w, params)
    print(f"d={params.dim}  f(w_T)={loss_smallstep(w, params):.6f}  "
          f"threshold={params.risk_threshold}")
