"""One-pass SGD hard instance: sparse distribution, loss, and oracles.

A sample is a single sparse subset V of the N codebook directions (each
direction included independently with probability 1/(4n^2)).  The weight
vector splits into an encoding subspace of n groups -- group r is a 2n-dim
vector of n two-dim position blocks -- followed by n step blocks:

    w = [ w^(0,1) | ... | w^(0,n) | w^(1) | ... | w^(n) ],  d = 2n^2 + n*dprime

The loss is a sum of three convex pieces:

- term 1 is the same per-block hinge norm as the GD instance (blocks 2..n);
- term 2 is a max over candidates (k, u, psi) that simultaneously reads the
  length-k sample prefix out of group k, rewards movement along u in block
  k, charges movement in block k+1 along the prefix's "still-common"
  direction, and shifts the prefix (extended by the current sample) from
  group k to group k+1;
- term 3 is linear: it writes the current sample into position 1 of group 1
  and nudges block 1 along a fixed direction (the first codebook vector).

Run one pass of SGD and each step drains the prefix from group t-1 into
group t while block t picks up half a step of the direction every earlier
sample still contains -- a direction fresh samples almost never contain, so
the iterates underfit the empirical risk in a precisely known way.

Oracle mode decodes group contents on the fly; groups that do not hold a
clean length-k prefix (group 1 intentionally accumulates a superposition of
codepoints in one block after a few steps) fall back to the zero candidate
psi = 0, which keeps the oracle total equal to the true max along
trajectories.  Reference mode enumerates every possible prefix encoding and
is exact everywhere but only feasible at tiny scales.  Ties across
candidates are broken toward the lowest codebook index, then the lowest
block index.
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
    TWO_PI,
    EncodingLayout,
    alpha_sgd,
    circle_point,
    decode_blocks,
    encode_sgd,
    full_mask,
    margin_eps,
    subset_count,
)
from .errors import (
    AmbiguousBlock,
    AttemptsExhausted,
    InfeasibleForcing,
    OutOfRange,
    ReferenceTooLarge,
)
from .instance_gd import EventReport

REFERENCE_BUDGET = 100_000

L1_FLOOR_COEF = 3.0 / 32.0


@dataclass(frozen=True)
class SgdParams:
    """Shape of one SGD hard instance (sample count n doubles as the step count).

    Parameters
    ----------
    n : int
        Training-set size; the run makes n-1 updates producing w_1 .. w_n.
    n_directions : int
        Codebook size N.
    eta : float, optional
        Step size; defaults to 1/(5*sqrt(n)), warns above it.
    dprime : int, optional
        Step-block dimension; defaults to default_dim(n_directions).
    """

    n: int
    n_directions: int
    eta: float = None
    dprime: int = None

    def __post_init__(self):
        if self.n < 1 or self.n_directions < 1:
            raise OutOfRange(
                f"need n >= 1 and n_directions >= 1; got "
                f"n={self.n}, n_directions={self.n_directions}"
            )
        if self.eta is None:
            object.__setattr__(self, "eta", 1.0 / (5.0 * math.sqrt(self.n)))
        elif self.eta > (1.0 / (5.0 * math.sqrt(self.n))) * (1 + 1e-12):
            warnings.warn(
                f"eta={self.eta:.4g} exceeds 1/(5*sqrt(n)); closed-form "
                "trajectory guarantees need the smaller step",
                stacklevel=2,
            )
        if self.dprime is None:
            object.__setattr__(self, "dprime", default_dim(self.n_directions))

    @property
    def layout(self):
        return EncodingLayout(
            encoding_dim=2 * self.n * self.n,
            block_dim=self.dprime,
            n_blocks=self.n,
        )

    @property
    def dim(self):
        return self.layout.total_dim

    @property
    def inclusion_probability(self):
        """Per-direction sampling probability: 1/(4 n^2)."""
        return 1.0 / (4.0 * self.n * self.n)

    @property
    def eps(self):
        return margin_eps(self.n, self.n_directions)

    @property
    def delta1(self):
        """Floor of the prefix-shift term: eta/(8 n^3)."""
        return self.eta / (8.0 * self.n**3)

    @property
    def smoothing_delta(self):
        """Smoothing radius the guarantees tolerate: eta*eps/(32 n^3)."""
        return self.eta * self.eps / (32.0 * self.n**3)

    @property
    def l1_floor(self):
        return L1_FLOOR_COEF * self.eta

    @property
    def group_codepoint_magnitude(self):
        """Norm of one occupied position block on trajectory: eta/(4 n^2)."""
        return self.eta / (4.0 * self.n * self.n)

    def group(self, w, r):
        """View of encoding group r (1-based), a 2n-dim slice of w."""
        if not 1 <= r <= self.n:
            raise OutOfRange(f"group {r} not in [1, {self.n}]")
        lo = 2 * self.n * (r - 1)
        return w[..., lo: lo + 2 * self.n]


@dataclass(frozen=True)
class SgdDataset:
    """A training set: one subset mask per sample position."""

    masks: tuple
    seed: int = None

    @property
    def n(self):
        return len(self.masks)

    def to_json(self):
        return {"seed": self.seed, "n": self.n, "masks": [int(m) for m in self.masks]}

    @classmethod
    def from_json(cls, payload):
        return cls(masks=tuple(int(m) for m in payload["masks"]), seed=payload.get("seed"))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def sample_sgd_dataset(params, seed):
    """Draw n subsets, each direction included with probability 1/(4 n^2)."""
    rng = np.random.default_rng(seed)
    p = params.inclusion_probability
    bits = rng.random((params.n, params.n_directions)) < p
    masks = tuple(int(sum(1 << r for r in range(params.n_directions) if row[r])) for row in bits)
    return SgdDataset(masks=masks, seed=int(seed))


def force_good_event_sgd(params, seed, max_tries=1000):
    """Construct a dataset on which the SGD good event provably holds.

    Picks increasing direction indices c_2 < ... < c_n from {2..N} and wires
    membership so v_{c_t} belongs to exactly the sets before step t; that
    makes the running intersection at step t exactly {c_t, ..., c_n}, whose
    minimum c_t no later set contains.  Direction 1 is kept out of every set
    (the step-1 clause) and the remaining free directions are sprinkled with
    the distribution's own inclusion probability into sets 2..n only, which
    cannot disturb the forced pattern.  The result is re-checked with
    good_event_sgd before being returned.
    """
    n, nd = params.n, params.n_directions
    if nd < n + 1:
        raise InfeasibleForcing(
            f"forcing needs n_directions >= n+1; got N={nd}, n={n}"
        )
    rng = np.random.default_rng(seed)
    p = params.inclusion_probability
    for _ in range(max_tries):
        anchors = np.sort(rng.choice(np.arange(2, nd + 1), size=n - 1, replace=False))
        taken = set(int(a) for a in anchors)
        free = [r for r in range(2, nd + 1) if r not in taken]
        masks = []
        for i in range(1, n + 1):  # set index
            mask = 0
            for t, c in zip(range(2, n + 1), anchors):  # v_c in V_i iff i < t
                if i < t:
                    mask |= 1 << (int(c) - 1)
            if i >= 2:
                for r in free:
                    if rng.random() < p:
                        mask |= 1 << (r - 1)
            masks.append(mask)
        ds = SgdDataset(masks=tuple(masks), seed=int(seed))
        if good_event_sgd(ds, params):
            return ds
    raise AttemptsExhausted(
        f"forcing failed to produce the good event in {max_tries} tries"
    )


@dataclass(frozen=True)
class EventStep:
    """Running-intersection state at one step: P_t, S_t as masks, J_t index."""

    step: int
    p_mask: int
    s_mask: int
    j: int  # min-index member of P_t; 0 when P_t is empty


def event_state_sgd(masks, n_directions):
    """P_t / S_t / J_t for t = 1..n (1-based steps).

    P_t intersects the sets before step t (P_1 is the full universe), S_t
    intersects the complements from step t on, and J_t is the lowest-index
    member of P_t.
    """
    n = len(masks)
    univ = full_mask(n_directions)
    out = []
    p = univ
    # suffix complements: s[t] = intersection of complements of V_t..V_n
    s_suffix = [univ] * (n + 2)
    for t in range(n, 0, -1):
        s_suffix[t] = s_suffix[t + 1] & (univ & ~masks[t - 1])
    for t in range(1, n + 1):
        j = 0
        if p:
            j = (p & -p).bit_length()
        out.append(EventStep(step=t, p_mask=p, s_mask=s_suffix[t], j=j))
        p &= masks[t - 1]
    return out

def good_event_sgd(dataset, params):
    """Check the SGD good event: for every t, P_t is nonempty and no set
    from step t on contains J_t.  The report's reason lists failing steps."""
    masks = dataset.masks if hasattr(dataset, "masks") else tuple(dataset)
    bad = []
    for st in event_state_sgd(masks, params.n_directions):
        if st.p_mask == 0:
            bad.append(f"step {st.step}: empty intersection")
        elif not st.s_mask >> (st.j - 1) & 1:
            bad.append(f"step {st.step}: direction {st.j} reappears later")
    if bad:
        return EventReport(False, "; ".join(bad))
    return EventReport(True)


# ---------------------------------------------------------------------------
# loss terms
# ---------------------------------------------------------------------------


def _step_blocks(w, params):
    lay = params.layout
    core = w[..., lay.encoding_dim:]
    return core.reshape(core.shape[:-1] + (params.n, params.dprime))


def _member_rows(mask, n_directions):
    return [r for r in range(n_directions) if mask >> r & 1]


def _l1_sgd(w, mask, params, codebook):
    blocks = _step_blocks(w, params)
    rows = _member_rows(mask, params.n_directions)
    if rows:
        vals = blocks @ codebook.vectors[rows].T
        inner = vals.max(axis=-1)
    else:
        inner = np.full(blocks.shape[:-1], -np.inf)
    h = np.maximum(params.l1_floor, inner[..., 1:])  # blocks 2..n
    return np.sqrt((h * h).sum(axis=-1))


def _l3_sgd(w, mask, params, codebook):
    lay = params.layout
    point = circle_point(mask, params.n_directions)
    first_block = lay.encoding(w)[..., 0:2]  # position 1 of group 1
    scale = 4.0 * params.n * params.n
    u1_read = lay.block(w, 1) @ codebook.vectors[0]
    return -(first_block @ point) / scale - u1_read / params.n**3


def _decode_group_prefix(group_vec, k, params):
    """Decode group k's content as a clean length-k prefix.

    Returns (psi, masks, alpha): the (1/n)-scaled re-encoded prefix, the
    decoded masks, and the lowest direction index common to all of them.
    Any other content -- empty, superposed, or occupying the wrong
    positions -- yields the fallback (zero vector, None, index 1).
    """
    n, nd = params.n, params.n_directions
    try:
        pairs = decode_blocks(
            group_vec, nd, expected_magnitude=params.group_codepoint_magnitude
        )
    except AmbiguousBlock:
        return np.zeros(2 * n), None, 1
    if [b for b, _ in pairs] != list(range(1, k + 1)):
        return np.zeros(2 * n), None, 1
    acc = np.zeros(2 * n)
    for pos, m in pairs:
        acc += encode_sgd(m, pos, n, nd)
    masks = [m for _, m in pairs]
    return acc / n, masks, alpha_sgd(masks, nd)


def _l2_decode_info(w, params):
    """Per-k decode results for a single point: list of (psi, masks, alpha)."""
    return [
        _decode_group_prefix(params.group(w, k), k, params)
        for k in range(1, params.n)
    ]


def _l2_table_point(w, mask, params, codebook, info):
    """Candidate values over (direction, k) for a single point, shape (N, n-1)."""
    n = params.n
    blocks = _step_blocks(w, params)  # (n, dprime)
    proj = blocks @ codebook.vectors.T  # (n, N)
    point = circle_point(mask, params.n_directions)
    table = np.empty((params.n_directions, n - 1))
    for k in range(1, n):
        psi, _, alpha = info[k - 1]
        gk = params.group(w, k)
        gk1 = params.group(w, k + 1)
        base = (
            -0.5 * proj[k, alpha - 1]
            + (gk @ psi - gk1 @ psi) / (4.0 * n)
            - (gk1[2 * k: 2 * k + 2] @ point) / (4.0 * n * n)
        )
        table[:, k - 1] = 0.375 * proj[k - 1, :] + base
    return table


def _l2_values_batch(w2, mask, params, codebook):
    """Prefix-shift term for a batch of rows, shape (B,).

    Vectorizes the per-group decode: block norms select the occupancy
    pattern, a pattern that is not exactly positions 1..k (or any ambiguous
    block) drops the row to the psi = 0 fallback, and the decoded angles
    supply the prefix inner products without materializing psi.
    """
    n, nd = params.n, params.n_directions
    b = w2.shape[0]
    m_mod = subset_count(nd)
    exp = params.group_codepoint_magnitude
    blocks = _step_blocks(w2, params)
    proj = blocks @ codebook.vectors.T  # (B, n, N)
    groups = params.layout.encoding(w2).reshape(b, n, n, 2)
    norms = np.hypot(groups[..., 0], groups[..., 1])  # (B, group, position)
    occupied = norms > 0.5 * exp
    ambiguous = occupied & (np.abs(norms - exp) > 0.5 * exp)
    angles = np.arctan2(groups[..., 0], groups[..., 1])
    codes = np.round(angles / TWO_PI * m_mod).astype(np.int64) % m_mod
    point = circle_point(mask, nd)

    if n == 1:
        return np.full(b, params.delta1)
    best = np.full(b, -np.inf)
    for k in range(1, n):
        gk = groups[:, k - 1]
        gk1 = groups[:, k]
        want = np.zeros(n, dtype=bool)
        want[:k] = True
        clean = (occupied[:, k - 1] == want).all(axis=1) & ~ambiguous[:, k - 1].any(
            axis=1
        )
        masks_k = codes[:, k - 1, :k]  # (B, k)
        theta = TWO_PI * (masks_k / m_mod)
        sin, cos = np.sin(theta), np.cos(theta)
        dot_k = (gk[:, :k, 0] * sin + gk[:, :k, 1] * cos).sum(axis=1) / n
        dot_k1 = (gk1[:, :k, 0] * sin + gk1[:, :k, 1] * cos).sum(axis=1) / n
        psi_term = np.where(clean, (dot_k - dot_k1) / (4.0 * n), 0.0)
        inter = np.bitwise_and.reduce(masks_k, axis=1)
        low = inter & -inter
        alpha = np.where(
            inter > 0,
            np.round(np.log2(np.maximum(low, 1))).astype(np.int64) + 1,
            nd,
        )
        alpha = np.where(clean, alpha, 1)
        alpha_term = -0.5 * np.take_along_axis(proj[:, k], alpha[:, None] - 1, axis=1)[
            :, 0
        ]
        phi_term = -(gk1[:, k, 0] * point[0] + gk1[:, k, 1] * point[1]) / (
            4.0 * n * n
        )
        k_best = 0.375 * proj[:, k - 1, :].max(axis=1) + alpha_term + psi_term + phi_term
        best = np.maximum(best, k_best)
    return np.maximum(params.delta1, best)


@lru_cache(maxsize=8)
def _reference_tables_sgd(n, n_directions):
    """Exhaustive prefix-encoding tables: for each k, all M^k candidates.

    Returns a list indexed by k-1 of (Psi rows (M^k, 2n), alpha indices).
    """
    m = subset_count(n_directions)
    count = sum(m**k for k in range(1, n))
    if count > REFERENCE_BUDGET:
        raise ReferenceTooLarge(
            f"reference enumeration needs {count} candidates "
            f"(budget {REFERENCE_BUDGET}); use the oracle mode"
        )
    tables = []
    for k in range(1, n):
        rows = np.zeros((m**k, 2 * n))
        alphas = np.zeros(m**k, dtype=np.int64)
        for r, masks in enumerate(itertools.product(range(m), repeat=k)):
            acc = np.zeros(2 * n)
            for pos, mk in enumerate(masks, start=1):
                acc += encode_sgd(mk, pos, n, n_directions)
            rows[r] = acc / n
            alphas[r] = alpha_sgd(masks, n_directions)
        tables.append((rows, alphas))
    return tables


def _l2_reference(w, mask, params, codebook, return_argmax=False):
    """Exact prefix-shift term by enumeration; w may be batched.

    With return_argmax (single point only) also returns (k, u_index, row)
    of the attaining candidate, ties broken toward the lowest direction
    index, then the lowest k, then enumeration order of the prefix rows.
    """
    n, nd = params.n, params.n_directions
    tables = _reference_tables_sgd(n, nd)
    blocks = _step_blocks(w, params)
    proj = blocks @ codebook.vectors.T  # (..., n, N)
    point = circle_point(mask, nd)
    if n == 1:
        val = np.maximum(params.delta1, np.full(w.shape[:-1], -np.inf))
        return (val, None) if return_argmax else val

    per_k_best = []
    per_k_row = []
    for k in range(1, n):
        rows, alphas = tables[k - 1]
        gk = params.group(w, k)
        gk1 = params.group(w, k + 1)
        u_alpha = codebook.vectors[alphas - 1]  # (R, dprime)
        wk1 = params.layout.block(w, k + 1)
        row_vals = (
            (gk - gk1) @ rows.T / (4.0 * n)
            - 0.5 * (wk1 @ u_alpha.T)
        )  # (..., R)
        row_best = row_vals.max(axis=-1)
        phi_term = -(gk1[..., 2 * k: 2 * k + 2] @ point) / (4.0 * n * n)
        per_k_best.append(row_best + phi_term)  # (...,)
        if return_argmax:
            per_k_row.append(int(np.argmax(row_vals)))
    stacked = np.stack(per_k_best, axis=-1)  # (..., n-1)
    table = 0.375 * np.swapaxes(proj, -1, -2)[..., :-1] + stacked[..., None, :]
    best = table.max(axis=(-2, -1))
    val = np.maximum(params.delta1, best)
    if not return_argmax:
        return val
    flat = int(np.argmax(table))
    u_star, k_star = divmod(flat, n - 1)
    return val, (k_star + 1, u_star + 1, per_k_row[k_star])


def loss_sgd(w, mask, params, codebook, mode="oracle"):
    """Loss of one sample (a subset mask) at w; w may be a batch (B, d)."""
    w = np.asarray(w, dtype=np.float64)
    l1 = _l1_sgd(w, mask, params, codebook)
    l3 = _l3_sgd(w, mask, params, codebook)
    if mode == "reference":
        l2 = _l2_reference(w, mask, params, codebook)
    elif mode == "oracle":
        if w.ndim == 1:
            if params.n == 1:
                l2 = params.delta1
            else:
                info = _l2_decode_info(w, params)
                table = _l2_table_point(w, mask, params, codebook, info)
                l2 = max(params.delta1, float(table.max()))
        else:
            l2 = _l2_values_batch(w, mask, params, codebook)
    else:
        raise OutOfRange(f"unknown loss mode {mode!r}")
    return l1 + l2 + l3


def loss_sgd_samples(w, masks, params, codebook, mode="oracle"):
    """Loss of many samples at one fixed w; returns shape (B,).

    The candidate table of the prefix-shift term is sample-independent
    except for its per-k coupling to the sample codepoint, so the table is
    built once and only the coupling column varies across samples.
    """
    w = np.asarray(w, dtype=np.float64)
    masks = np.asarray(masks, dtype=np.int64)
    n, nd = params.n, params.n_directions

    # term 1 per sample
    blocks = _step_blocks(w, params)
    proj = codebook.vectors @ blocks.T  # (N, n)
    member = (masks[:, None] >> np.arange(nd)[None, :] & 1).astype(bool)
    inner = np.where(member[:, :, None], proj[None, :, :], -np.inf).max(axis=1)
    h = np.maximum(params.l1_floor, inner[:, 1:])
    l1 = np.sqrt((h * h).sum(axis=1))

    # term 3 per sample
    m_mod = subset_count(nd)
    angle = TWO_PI * (masks / m_mod)
    first_block = params.layout.encoding(w)[0:2]
    l3 = -(np.sin(angle) * first_block[0] + np.cos(angle) * first_block[1]) / (
        4.0 * n * n
    ) - float(params.layout.block(w, 1) @ codebook.vectors[0]) / n**3

    # term 2: sample-free part of each k-column, then the coupling
    if n == 1:
        return l1 + params.delta1 + l3
    if mode == "oracle":
        info = _l2_decode_info(w, params)
        table = _l2_table_point(w, 0, params, codebook, info)  # mask 0: no coupling yet
    elif mode == "reference":
        table = _reference_point_table(w, params, codebook)
    else:
        raise OutOfRange(f"unknown loss mode {mode!r}")
    # undo the mask-0 coupling folded into the table, then add per-sample ones
    point0 = circle_point(0, nd)
    couple = np.empty((len(masks), n - 1))
    for k in range(1, n):
        gk1_block = params.group(w, k + 1)[2 * k: 2 * k + 2]
        couple0 = -(gk1_block @ point0) / (4.0 * n * n)
        couple[:, k - 1] = (
            -(np.sin(angle) * gk1_block[0] + np.cos(angle) * gk1_block[1])
            / (4.0 * n * n)
        ) - couple0
    col_best = table.max(axis=0)  # (n-1,) over directions
    l2 = np.maximum(params.delta1, (col_best[None, :] + couple).max(axis=1))
    return l1 + l2 + l3


def _reference_point_table(w, params, codebook):
    """(N, n-1) reference-mode candidate table at a single point (mask 0)."""
    n = params.n
    tables = _reference_tables_sgd(n, params.n_directions)
    blocks = _step_blocks(w, params)
    proj = blocks @ codebook.vectors.T
    point0 = circle_point(0, params.n_directions)
    out = np.empty((params.n_directions, n - 1))
    for k in range(1, n):
        rows, alphas = tables[k - 1]
        gk = params.group(w, k)
        gk1 = params.group(w, k + 1)
        u_alpha = codebook.vectors[alphas - 1]
        wk1 = params.layout.block(w, k + 1)
        row_vals = (gk - gk1) @ rows.T / (4.0 * n) - 0.5 * (wk1 @ u_alpha.T)
        base = row_vals.max() - (gk1[2 * k: 2 * k + 2] @ point0) / (4.0 * n * n)
        out[:, k - 1] = 0.375 * proj[k - 1, :] + base
    return out


def grad_sgd(w, mask, params, codebook, mode="oracle"):
    """Subgradient of one sample's loss at w (single point only).

    Lowest-direction-then-lowest-block tie-breaking, matching loss_sgd's
    candidate ordering, so trajectories are bitwise reproducible.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1:
        raise OutOfRange("grad_sgd expects a single point, not a batch")
    n, nd = params.n, params.n_directions
    lay = params.layout
    g = np.zeros_like(w)

    # term 1
    rows = _member_rows(mask, nd)
    if rows:
        blocks = _step_blocks(w, params)
        vals = blocks @ codebook.vectors[rows].T
        inner = vals.max(axis=1)
        h = np.maximum(params.l1_floor, inner[1:])
        l1 = math.sqrt(float((h * h).sum()))
        if l1 > 0.0:
            for k in range(2, n + 1):
                if inner[k - 1] > params.l1_floor:
                    star = rows[int(np.argmax(vals[k - 1]))]
                    lay.block(g, k)[:] += (h[k - 2] / l1) * codebook.vectors[star]

    # term 2
    if n > 1:
        if mode == "oracle":
            info = _l2_decode_info(w, params)
            table = _l2_table_point(w, mask, params, codebook, info)
            flat = int(np.argmax(table))
            u_star, k_star = divmod(flat, n - 1)
            k = k_star + 1
            if table[u_star, k_star] > params.delta1:
                psi, _, alpha = info[k_star]
                _apply_l2_grad(g, k, u_star, alpha, psi, mask, params, codebook)
        elif mode == "reference":
            val, argmax = _l2_reference(w, mask, params, codebook, return_argmax=True)
            k, u_idx, row = argmax
            tables = _reference_tables_sgd(n, nd)
            rows_k, alphas_k = tables[k - 1]
            if float(val) > params.delta1:
                _apply_l2_grad(
                    g, k, u_idx - 1, int(alphas_k[row]), rows_k[row], mask, params,
                    codebook,
                )
        else:
            raise OutOfRange(f"unknown loss mode {mode!r}")

    # term 3 (constant)
    lay.encoding(g)[0:2] -= circle_point(mask, nd) / (4.0 * n * n)
    lay.block(g, 1)[:] -= codebook.vectors[0] / n**3
    return g


def _apply_l2_grad(g, k, u_row, alpha, psi, mask, params, codebook):
    """Accumulate the prefix-shift term's gradient at candidate (k, u, psi)."""
    n = params.n
    lay = params.layout
    lay.block(g, k)[:] += 0.375 * codebook.vectors[u_row]
    lay.block(g, k + 1)[:] -= 0.5 * codebook.vectors[alpha - 1]
    params.group(g, k)[:] += psi / (4.0 * n)
    params.group(g, k + 1)[:] -= psi / (4.0 * n)
    params.group(g, k + 1)[2 * k: 2 * k + 2] -= circle_point(
        mask, params.n_directions
    ) / (4.0 * n * n)
