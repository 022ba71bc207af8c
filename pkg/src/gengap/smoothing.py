"""Randomized smoothing: ball averages, zeroth-order gradients, checks.

The smoothed loss is the average of f over a delta-ball around w.  Both the
value and the gradient are estimated by Monte Carlo:

    value: mean of f(w + delta*v), v uniform in the unit ball;
    grad:  (dim/delta) * mean of f(w + delta*a) * a, a uniform on the sphere,

the latter optionally with antithetic pairs (a, -a), which cancels the
constant part of f exactly and, for locally linear f, leaves a per-pair
contribution whose mean is the exact gradient.  Each family's params object
carries the radius its guarantees tolerate (smoothing_delta); when the
radius stays below every argmax margin, the smoothed gradient agrees with
the subgradient the optimizer uses, which is what
verify_trajectory_preservation spot-checks statistically.

Sampling is chunked with per-chunk seeds spawned from the config seed, so
estimates are reproducible and independent of how many chunks run.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDraw, EventViolated, OutOfRange

CHUNK = 8192

_MIN_NORM = 1e-150
_MAX_REDRAWS = 100


@dataclass(frozen=True)
class SmoothingConfig:
    """Radius, sample count, seed, and pairing mode for the estimators."""

    delta: float
    samples: int
    seed: int = 0
    antithetic: bool = True

    def __post_init__(self):
        if self.delta <= 0:
            raise OutOfRange(f"delta must be positive; got {self.delta}")
        if self.samples < 2:
            raise OutOfRange(f"need at least 2 samples; got {self.samples}")


def sphere_sample(dim, rng, size=None):
    """Uniform unit vectors: normalized standard Gaussians.

    Parameters
    ----------
    dim : int
        Ambient dimension.
    rng : numpy.random.Generator
        Source of randomness.
    size : int, optional
        When given, returns (size, dim); otherwise a single (dim,) vector.

    Raises
    ------
    DegenerateDraw
        If a Gaussian draw's norm underflows 100 redraws in a row (not
        observable in practice; guards the normalization).
    """
    if dim < 1:
        raise OutOfRange(f"dim must be positive; got {dim}")
    count = 1 if size is None else int(size)
    x = rng.standard_normal((count, dim))
    norms = np.linalg.norm(x, axis=1)
    for _ in range(_MAX_REDRAWS):
        bad = norms < _MIN_NORM
        if not bad.any():
            break
        x[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms[bad] = np.linalg.norm(x[bad], axis=1)
    else:
        raise DegenerateDraw("sphere draw kept underflowing after 100 redraws")
    y = x / norms[:, None]
    return y[0] if size is None else y


def ball_sample(dim, rng, size=None):
    """Uniform points in the unit ball: sphere draw times U^(1/dim).

    The radial factor U^(1/dim) gives the r^dim volume law, so the mean
    norm is dim/(dim+1).
    """
    count = 1 if size is None else int(size)
    y = sphere_sample(dim, rng, size=count)
    r = rng.random(count) ** (1.0 / dim)
    out = y * r[:, None]
    return out[0] if size is None else out


def _chunk_seeds(seed, n_chunks):
    return np.random.SeedSequence(seed).spawn(n_chunks)


def smoothed_value(loss, w, cfg):
    """Monte-Carlo ball average of loss around w: (estimate, stderr).

    loss must accept both a single point (d,) and a batch (B, d).  The
    accumulation is centered at loss(w), which changes no estimate in exact
    arithmetic but keeps the variance sums fully precise when the
    perturbations are tiny (a constant loss reports stderr exactly 0).
    """
    w = np.asarray(w, dtype=np.float64)
    base = float(loss(w))
    m = cfg.samples
    n_chunks = -(-m // CHUNK)
    seeds = _chunk_seeds(cfg.seed, n_chunks)
    total = 0.0
    total_sq = 0.0
    done = 0
    for i in range(n_chunks):
        b = min(CHUNK, m - done)
        rng = np.random.default_rng(seeds[i])
        v = ball_sample(w.size, rng, size=b)
        vals = np.asarray(loss(w[None, :] + cfg.delta * v), dtype=np.float64) - base
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
        done += b
    mean = total / m
    var = max(total_sq - m * mean * mean, 0.0) / (m - 1)
    return base + mean, float(np.sqrt(var / m))


def smoothed_grad(loss, w, cfg):
    """Zeroth-order gradient estimate: (vector estimate, per-coordinate stderr).

    Averages (dim/delta) * loss(w + delta*a) * a over sphere draws.  With
    antithetic pairing each pair (a, -a) contributes
    (dim/delta) * (loss(w+delta*a) - loss(w-delta*a))/2 * a, so the sample
    count covers samples//2 pairs (an odd trailing draw is dropped).
    """
    w = np.asarray(w, dtype=np.float64)
    dim = w.size
    scale = dim / cfg.delta
    count = cfg.samples // 2 if cfg.antithetic else cfg.samples
    if count < 2:
        raise OutOfRange("too few samples for a variance estimate")
    n_chunks = -(-count // CHUNK)
    seeds = _chunk_seeds(cfg.seed, n_chunks)
    total = np.zeros(dim)
    total_sq = np.zeros(dim)
    done = 0
    for i in range(n_chunks):
        b = min(CHUNK, count - done)
        rng = np.random.default_rng(seeds[i])
        a = sphere_sample(dim, rng, size=b)
        if cfg.antithetic:
            f_plus = np.asarray(loss(w[None, :] + cfg.delta * a), dtype=np.float64)
            f_minus = np.asarray(loss(w[None, :] - cfg.delta * a), dtype=np.float64)
            contrib = (0.5 * scale * (f_plus - f_minus))[:, None] * a
        else:
            vals = np.asarray(loss(w[None, :] + cfg.delta * a), dtype=np.float64)
            contrib = (scale * vals)[:, None] * a
        total += contrib.sum(axis=0)
        total_sq += (contrib * contrib).sum(axis=0)
        done += b
    est = total / count
    var = np.maximum(total_sq - count * est * est, 0.0) / (count - 1)
    return est, np.sqrt(var / count)


@dataclass(frozen=True)
class PreservationStep:
    """One checked iterate: worst coordinate discrepancy vs its stderr."""

    step: int
    max_abs_diff: float
    max_sigma: float  # max over coordinates of |diff| / stderr
    within: bool


@dataclass(frozen=True)
class PreservationReport:
    steps: tuple
    ok: bool


def verify_trajectory_preservation(codebook, dataset, params, cfg, steps=None,
                                   mode="oracle"):
    """Compare exact subgradients with smoothed estimates along the
    closed-form trajectory; a pass (every coordinate within 3 stderr at
    every checked step) is the statistical evidence that descent on the
    smoothed loss reproduces the nonsmooth trajectory at this radius.

    Dispatches on the params type.  For the full-batch family the gradient
    is the empirical-risk gradient; for the one-pass family, step t is
    checked against the sample it consumes (the final iterate, which
    consumes nothing, is checked against the last sample).  Requires the
    family's good event; raises EventViolated otherwise.
    """
    from . import verify as _verify
    from .instance_gd import GdParams, good_event_gd, grad_gd_batch, loss_gd
    from .instance_sgd import SgdParams, good_event_sgd, grad_sgd, loss_sgd
    from .instance_smallstep import (
        SmallstepParams,
        grad_smallstep,
        loss_smallstep,
    )
    from .optim import run_smallstep

    if isinstance(params, GdParams):
        report = good_event_gd(dataset, params)
        if not report:
            raise EventViolated(f"good event fails: {report.reason}")
        all_steps = range(1, params.steps + 1)
        points = {
            t: (np.zeros(params.dim) if t == 1
                else _verify.expected_gd_iterate(t, params, dataset, codebook))
            for t in (steps or all_steps)
        }

        def loss_at(t):
            def f(w):
                total = 0.0
                for s in zip(dataset.masks, dataset.slots):
                    total = total + loss_gd(w, s, params, codebook, mode=mode)
                return total / dataset.n

            return f

        def grad_at(t, w):
            return grad_gd_batch(w, dataset, params, codebook, mode=mode)

    elif isinstance(params, SgdParams):
        report = good_event_sgd(dataset, params)
        if not report:
            raise EventViolated(f"good event fails: {report.reason}")
        all_steps = range(1, params.n + 1)
        points = {
            t: (np.zeros(params.dim) if t == 1
                else _verify.expected_sgd_iterate(t, params, dataset, codebook))
            for t in (steps or all_steps)
        }

        def loss_at(t):
            mask = dataset.masks[min(t, dataset.n) - 1]
            return lambda w: loss_sgd(w, mask, params, codebook, mode=mode)

        def grad_at(t, w):
            mask = dataset.masks[min(t, dataset.n) - 1]
            return grad_sgd(w, mask, params, codebook, mode=mode)

    elif isinstance(params, SmallstepParams):
        traj = run_smallstep(params)
        all_steps = range(1, params.steps + 1)
        points = {t: traj.iterate(t) for t in (steps or all_steps)}

        def loss_at(t):
            return lambda w: loss_smallstep(w, params)

        def grad_at(t, w):
            return grad_smallstep(w, params)

    else:
        raise OutOfRange(f"unrecognized params type: {type(params).__name__}")

    records = []
    for t in sorted(points):
        w = points[t]
        exact = grad_at(t, w)
        est, stderr = smoothed_grad(loss_at(t), w, cfg)
        diff = np.abs(est - exact)
        # a coordinate with zero spread must match outright
        with np.errstate(divide="ignore", invalid="ignore"):
            sigma = np.where(stderr > 0, diff / stderr, np.where(diff > 0, np.inf, 0.0))
        records.append(
            PreservationStep(
                step=t,
                max_abs_diff=float(diff.max()),
                max_sigma=float(sigma.max()),
                within=bool((sigma <= 3.0).all()),
            )
        )
    return PreservationReport(steps=tuple(records), ok=all(r.within for r in records))
