"""Full-batch GD hard instance: distribution, loss, and (sub)gradients.

A sample is a pair (V, j): a random subset V of the N codebook directions
plus a random slot j in [n^2].  The weight vector splits into an encoding
subspace (n^2 two-dim blocks, one per slot) followed by T step blocks of
dprime dims each:

    w = [ w^(0) | w^(1) | ... | w^(T) ],   d = 2 n^2 + T * dprime

The loss is a sum of four convex pieces:

- term 1 rewards staying clear of the sampled directions in every step
  block (an L2 norm of per-block hinge maxima, floored at 3*eta/32);
- term 2 is linear and writes the sample's codepoint into its slot block,
  which makes the first GD step record the whole training set in w^(0);
- term 3 reads the training set back out of w^(0) (a max over all possible
  encoded training sets) and pays for movement along the decoded
  "uncovered" direction in block 1;
- term 4 is a ratchet that copies the uncovered direction from block k to
  block k+1, one block per step.

Together these make GD spell out, block by block, a direction no training
sample contains -- so the trained iterate generalizes badly while the
empirical risk looks fine.

Two evaluation modes exist for the read-out term: "oracle" decodes w^(0)
(valid exactly in the trajectory regime; raises OracleDomain elsewhere) and
"reference" enumerates every candidate encoded training set (exact
everywhere, but only feasible at tiny scales).
"""

import itertools
import json
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .codebook import default_dim
from .encoding import (
    EncodingLayout,
    alpha_gd,
    circle_point,
    decode_blocks,
    encode_gd,
    full_mask,
    margin_eps,
    subset_count,
)
from .errors import (
    AmbiguousBlock,
    AttemptsExhausted,
    OracleDomain,
    OutOfRange,
    ReferenceTooLarge,
)

REFERENCE_BUDGET = 100_000

L1_FLOOR_COEF = 3.0 / 32.0  # the per-block hinge floor is (3/32) * eta


def theorem_step_size(steps):
    """Step size the guarantees are stated for: eta = 1/(5*sqrt(T))."""
    return 1.0 / (5.0 * math.sqrt(steps))


@dataclass(frozen=True)
class GdParams:
    """Shape of one GD hard instance.

    Parameters
    ----------
    n : int
        Training-set size (and slot grid is n^2).
    n_directions : int
        Codebook size N.
    steps : int
        Iterate count T (the trajectory is w_1 .. w_T).
    eta : float, optional
        Step size; defaults to 1/(5*sqrt(T)).  Larger values are allowed
        but warn, since the closed-form trajectory is only guaranteed in
        the small-step regime.
    dprime : int, optional
        Step-block dimension; defaults to default_dim(n_directions).
    """

    n: int
    n_directions: int
    steps: int
    eta: float = None
    dprime: int = None

    def __post_init__(self):
        if self.n < 1 or self.steps < 2 or self.n_directions < 1:
            raise OutOfRange(
                f"need n >= 1, steps >= 2, n_directions >= 1; got "
                f"n={self.n}, steps={self.steps}, n_directions={self.n_directions}"
            )
        if self.eta is None:
            object.__setattr__(self, "eta", theorem_step_size(self.steps))
        elif self.eta > theorem_step_size(self.steps) * (1 + 1e-12):
            warnings.warn(
                f"eta={self.eta:.4g} exceeds 1/(5*sqrt(T))={theorem_step_size(self.steps):.4g}; "
                "closed-form trajectory guarantees need the smaller step",
                stacklevel=2,
            )
        if self.dprime is None:
            object.__setattr__(self, "dprime", default_dim(self.n_directions))

    @property
    def layout(self):
        return EncodingLayout(
            encoding_dim=2 * self.n * self.n,
            block_dim=self.dprime,
            n_blocks=self.steps,
        )

    @property
    def dim(self):
        return self.layout.total_dim

    @property
    def eps(self):
        """Scaled adjacent-codepoint margin of the slot encoding."""
        return margin_eps(self.n, self.n_directions)

    @property
    def beta(self):
        """Weight of the read-out term's movement reward: eps/(4 T^2)."""
        return self.eps / (4.0 * self.steps * self.steps)

    @property
    def delta1(self):
        """Floor of the read-out term: eta/(2n)."""
        return self.eta / (2.0 * self.n)

    @property
    def delta2(self):
        """Floor of the ratchet term: 3*eta*beta/16."""
        return 3.0 * self.eta * self.beta / 16.0

    @property
    def smoothing_delta(self):
        """Smoothing radius the guarantees tolerate: eta*beta/32."""
        return self.eta * self.beta / 32.0

    @property
    def l1_floor(self):
        return L1_FLOOR_COEF * self.eta

    @property
    def codepoint_magnitude(self):
        """Norm of one slot block of the on-trajectory iterate: eta/n."""
        return self.eta / self.n


@dataclass(frozen=True)
class GdDataset:
    """A training set: subset masks V_i and slot indices j_i (1-based)."""

    masks: tuple
    slots: tuple
    seed: int = None

    @property
    def n(self):
        return len(self.masks)

    def to_json(self):
        return {
            "seed": self.seed,
            "n": self.n,
            "samples": [
                {"mask": int(m), "slot": int(s)}
                for m, s in zip(self.masks, self.slots)
            ],
        }

    @classmethod
    def from_json(cls, payload):
        samples = payload["samples"]
        return cls(
            masks=tuple(int(s["mask"]) for s in samples),
            slots=tuple(int(s["slot"]) for s in samples),
            seed=payload.get("seed"),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def sample_gd_dataset(params, seed, policy="unconditioned", max_tries=100_000):
    """Draw a training set from the GD hard distribution.

    Each sample is an independent uniform subset of the N directions (every
    direction included with probability 1/2) paired with a uniform slot in
    [n^2].  With policy="reject-until-E" whole datasets are redrawn until
    the good event holds (union of the subsets misses at least one
    direction AND all slots are distinct).
    """
    if policy not in ("unconditioned", "reject-until-E"):
        raise OutOfRange(f"unknown sampling policy {policy!r}")
    rng = np.random.default_rng(seed)
    m = subset_count(params.n_directions)
    n_slots = params.n * params.n
    for _ in range(max_tries):
        masks = tuple(int(v) for v in rng.integers(0, m, size=params.n, dtype=np.int64))
        slots = tuple(int(s) for s in rng.integers(1, n_slots + 1, size=params.n))
        ds = GdDataset(masks=masks, slots=slots, seed=int(seed))
        if policy == "unconditioned" or good_event_gd(ds, params):
            return ds
    raise AttemptsExhausted(
        f"no dataset satisfied the good event in {max_tries} draws"
    )


@dataclass(frozen=True)
class EventReport:
    """Outcome of a good-event check; truthy iff the event holds."""

    ok: bool
    reason: str = ""

    def __bool__(self):
        return self.ok


def good_event_gd(dataset, params):
    """Check the GD good event: uncovered direction + distinct slots.

    Returns an EventReport whose reason names the violated clause (subset
    union covering every direction, or a slot collision).
    """
    union = 0
    for mask in dataset.masks:
        union |= mask
    if union == full_mask(params.n_directions):
        return EventReport(False, "subset union covers every direction")
    if len(set(dataset.slots)) != len(dataset.slots):
        return EventReport(False, "slot collision")
    return EventReport(True)


# ---------------------------------------------------------------------------
# loss terms
#
# Every term accepts w of shape (d,) or (B, d) and returns () or (B,)
# accordingly.  The heavy lifting is plain numpy; per-sample python loops
# only appear in the oracle decode path, which is one point at a time on
# trajectories anyway.
# ---------------------------------------------------------------------------


def _step_blocks(w, params):
    """View of the step blocks as (..., T, dprime)."""
    lay = params.layout
    core = w[..., lay.encoding_dim:]
    return core.reshape(core.shape[:-1] + (params.steps, params.dprime))


def _member_rows(mask, n_directions):
    """0-based codebook rows present in the mask."""
    return [r for r in range(n_directions) if mask >> r & 1]


def _l1_gd(w, mask, params, codebook):
    blocks = _step_blocks(w, params)  # (..., T, dprime)
    rows = _member_rows(mask, params.n_directions)
    floor = params.l1_floor
    if rows:
        # inner products of every member direction with every step block
        vals = blocks @ codebook.vectors[rows].T  # (..., T, |V|)
        inner = vals.max(axis=-1)
    else:
        inner = np.full(blocks.shape[:-1], -np.inf)
    h = np.maximum(floor, inner[..., 1:])  # blocks k = 2..T
    return np.sqrt((h * h).sum(axis=-1))


def _l2_gd(w, mask, slot, params):
    lay = params.layout
    point = circle_point(mask, params.n_directions)
    block = lay.encoding(w)[..., 2 * (slot - 1): 2 * slot]
    return -(block @ point)


def _l4_candidates(w, params, codebook):
    """Ratchet candidates (3/8)<u,w^(k)> - (1/2)<u,w^(k+1)>, shape (..., N, T-1)."""
    blocks = _step_blocks(w, params)
    proj = blocks @ codebook.vectors.T  # (..., T, N)
    proj = np.swapaxes(proj, -1, -2)  # (..., N, T)
    return 0.375 * proj[..., :-1] - 0.5 * proj[..., 1:]


def _l4_gd(w, params, codebook):
    cands = _l4_candidates(w, params, codebook)
    best = cands.max(axis=(-2, -1))
    return np.maximum(params.delta2, best)


@lru_cache(maxsize=8)
def _reference_table_gd(n, n_directions):
    """Exhaustive encoded-training-set table for the read-out term.

    Returns (Psi, alpha_indices): Psi has one row per candidate training
    set (n distinct slots, any subsets), holding (1/n) * sum of the slot
    codepoints; alpha_indices holds the 1-based uncovered-direction index
    for each row.  Row count is C(n^2, n) * 2^(N*n), so this exists only
    for tiny instances.
    """
    m = subset_count(n_directions)
    n_slots = n * n
    count = math.comb(n_slots, n) * m**n
    if count > REFERENCE_BUDGET:
        raise ReferenceTooLarge(
            f"reference enumeration needs {count} candidates "
            f"(budget {REFERENCE_BUDGET}); use the oracle mode"
        )
    psi_rows = np.zeros((count, 2 * n_slots))
    alpha_idx = np.zeros(count, dtype=np.int64)
    r = 0
    for slot_combo in itertools.combinations(range(1, n_slots + 1), n):
        for masks in itertools.product(range(m), repeat=n):
            acc = np.zeros(2 * n_slots)
            for mask, slot in zip(masks, slot_combo):
                acc += encode_gd(mask, slot, n, n_directions)
            psi_rows[r] = acc / n
            alpha_idx[r] = alpha_gd(masks, n_directions)
            r += 1
    return psi_rows, alpha_idx


def _decode_training_set(w0, params):
    """Decode the slot blocks of a single encoding-subspace vector.

    Returns (psi_star, alpha_index): the re-encoded (1/n)*sum vector and the
    uncovered-direction index of the decoded training set.  An empty
    subspace decodes to (zeros, index 1); anything with a partial or
    ambiguous occupancy raises OracleDomain.
    """
    try:
        pairs = decode_blocks(
            w0, params.n_directions, expected_magnitude=params.codepoint_magnitude
        )
    except AmbiguousBlock as exc:
        raise OracleDomain(f"encoding subspace not decodable: {exc}") from exc
    if not pairs:
        return np.zeros_like(w0), 1
    if len(pairs) != params.n:
        raise OracleDomain(
            f"decoded {len(pairs)} occupied slots, expected 0 or {params.n}"
        )
    acc = np.zeros_like(w0)
    for slot, mask in pairs:
        acc += encode_gd(mask, slot, params.n, params.n_directions)
    return acc / params.n, alpha_gd([mask for _, mask in pairs], params.n_directions)


def _l3_gd(w, params, codebook, mode):
    lay = params.layout
    w0 = lay.encoding(w)
    w1 = lay.block(w, 1)
    if mode == "reference":
        psi, alpha_idx = _reference_table_gd(params.n, params.n_directions)
        u_alpha = codebook.vectors[alpha_idx - 1]  # (K, dprime)
        vals = w0 @ psi.T - params.beta * (w1 @ u_alpha.T)  # (..., K)
        return np.maximum(params.delta1, vals.max(axis=-1))
    if mode != "oracle":
        raise OutOfRange(f"unknown loss mode {mode!r}")
    if w.ndim == 1:
        psi_star, alpha_idx = _decode_training_set(w0, params)
        cand = float(w0 @ psi_star) - params.beta * float(
            codebook.vectors[alpha_idx - 1] @ w1
        )
        return np.maximum(params.delta1, cand)
    return np.array([_l3_gd(row, params, codebook, mode) for row in w])


def loss_gd(w, sample, params, codebook, mode="oracle"):
    """Loss of one sample at w; w may be a batch of rows (B, d).

    sample is a (mask, slot) pair.  mode picks how the read-out term is
    evaluated: "oracle" (decode w^(0); trajectory regime only) or
    "reference" (exhaustive; tiny instances only).
    """
    mask, slot = sample
    w = np.asarray(w, dtype=np.float64)
    return (
        _l1_gd(w, mask, params, codebook)
        + _l2_gd(w, mask, slot, params)
        + _l3_gd(w, params, codebook, mode)
        + _l4_gd(w, params, codebook)
    )


def loss_gd_samples(w, masks, slots, params, codebook, mode="oracle"):
    """Loss of many samples at one fixed w; returns shape (B,).

    This is the Monte-Carlo path: the sample-independent terms (read-out
    and ratchet) are evaluated once, and the per-sample terms are done as
    one batched matrix product over the masks/slots arrays.
    """
    w = np.asarray(w, dtype=np.float64)
    masks = np.asarray(masks, dtype=np.int64)
    slots = np.asarray(slots, dtype=np.int64)
    const = float(_l3_gd(w, params, codebook, mode)) + float(
        _l4_gd(w, params, codebook)
    )

    # term 1 for every mask: masked max over the direction/block products
    blocks = _step_blocks(w, params)  # (T, dprime)
    proj = codebook.vectors @ blocks.T  # (N, T)
    member = (
        masks[:, None] >> np.arange(params.n_directions)[None, :] & 1
    ).astype(bool)  # (B, N)
    inner = np.where(member[:, :, None], proj[None, :, :], -np.inf).max(axis=1)
    h = np.maximum(params.l1_floor, inner[:, 1:])
    l1 = np.sqrt((h * h).sum(axis=1))

    # term 2: minus the slot block read off at each sample's codepoint
    lay = params.layout
    enc_blocks = lay.encoding(w).reshape(-1, 2)  # (n^2, 2)
    sel = enc_blocks[slots - 1]  # (B, 2)
    m = subset_count(params.n_directions)
    angle = 2.0 * math.pi * (masks / m)
    l2 = -(np.sin(angle) * sel[:, 0] + np.cos(angle) * sel[:, 1])

    return l1 + l2 + const


def grad_gd(w, sample, params, codebook, mode="oracle"):
    """Subgradient of one sample's loss at w (single point only).

    Ties in any argmax are broken toward the lowest codebook index first
    and the lowest block index second, which makes trajectories bitwise
    reproducible.
    """
    mask, slot = sample
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1:
        raise OutOfRange("grad_gd expects a single point, not a batch")
    lay = params.layout
    g = np.zeros_like(w)

    # term 1: weighted argmax directions where the hinge is above floor
    rows = _member_rows(mask, params.n_directions)
    if rows:
        blocks = _step_blocks(w, params)
        vals = blocks @ codebook.vectors[rows].T  # (T, |V|)
        inner = vals.max(axis=1)
        h = np.maximum(params.l1_floor, inner[1:])
        l1 = math.sqrt(float((h * h).sum()))
        if l1 > 0.0:
            for k in range(2, params.steps + 1):
                if inner[k - 1] > params.l1_floor:
                    star = rows[int(np.argmax(vals[k - 1]))]
                    lay.block(g, k)[:] += (h[k - 2] / l1) * codebook.vectors[star]

    # term 2: linear
    lay.encoding(g)[2 * (slot - 1): 2 * slot] -= circle_point(
        mask, params.n_directions
    )

    # term 3: decoded read-out, active only above its floor
    w0 = lay.encoding(w)
    w1 = lay.block(w, 1)
    if mode == "reference":
        psi, alpha_idx = _reference_table_gd(params.n, params.n_directions)
        u_alpha = codebook.vectors[alpha_idx - 1]
        vals = psi @ w0 - params.beta * (u_alpha @ w1)
        best = int(np.argmax(vals))
        if vals[best] > params.delta1:
            lay.encoding(g)[:] += psi[best]
            lay.block(g, 1)[:] -= params.beta * u_alpha[best]
    elif mode == "oracle":
        psi_star, alpha_idx = _decode_training_set(w0, params)
        u_alpha = codebook.vectors[alpha_idx - 1]
        cand = float(w0 @ psi_star) - params.beta * float(u_alpha @ w1)
        if cand > params.delta1:
            lay.encoding(g)[:] += psi_star
            lay.block(g, 1)[:] -= params.beta * u_alpha
    else:
        raise OutOfRange(f"unknown loss mode {mode!r}")

    # term 4: ratchet argmax (u-major flattening = lowest direction wins ties)
    cands = _l4_candidates(w, params, codebook)  # (N, T-1)
    flat = int(np.argmax(cands))
    u_star, k_star = divmod(flat, params.steps - 1)
    if cands[u_star, k_star] > params.delta2:
        k = k_star + 1  # 1-based block index
        lay.block(g, k)[:] += 0.375 * codebook.vectors[u_star]
        lay.block(g, k + 1)[:] -= 0.5 * codebook.vectors[u_star]

    return g


def grad_gd_batch(w, dataset, params, codebook, mode="oracle"):
    """Mean subgradient over the whole training set (the full-batch step)."""
    g = np.zeros(params.dim)
    for mask, slot in zip(dataset.masks, dataset.slots):
        g += grad_gd(w, (mask, slot), params, codebook, mode=mode)
    return g / dataset.n
