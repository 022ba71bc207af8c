"""Circle-code encodings: geometry, roundtrips, and direction selection."""

import math

import numpy as np
import pytest

from gengap.encoding import (
    EncodingLayout,
    alpha_gd,
    alpha_sgd,
    circle_point,
    decode_blocks,
    encode_gd,
    encode_sgd,
    full_mask,
    margin_eps,
    mask_members,
    subset_count,
)
from gengap.errors import AmbiguousBlock, OutOfRange


def test_subset_count_and_full_mask():
    assert subset_count(3) == 8
    assert subset_count(10) == 1024
    assert full_mask(3) == 0b111
    assert full_mask(1) == 0b1


def test_mask_members_lists_one_based_bits():
    assert mask_members(0b101, 3) == [1, 3]
    assert mask_members(0, 5) == []
    assert mask_members(full_mask(4), 4) == [1, 2, 3, 4]


def test_circle_points_are_unit_and_distinct():
    n_directions = 5
    pts = np.array([circle_point(m, n_directions)
                    for m in range(subset_count(n_directions))])
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)
    # all codepoints distinct: smallest pairwise distance is the designed one
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    assert d2.min() > 0.0
    # adjacent codepoints realize the minimum distance
    step = float(np.linalg.norm(pts[0] - pts[1]))
    assert math.isclose(math.sqrt(d2.min()), step, rel_tol=1e-12)


def test_circle_point_zero_mask_is_deterministic_anchor():
    assert np.allclose(circle_point(0, 4), [0.0, 1.0])


def test_margin_eps_positive_and_shrinks_with_size():
    assert margin_eps(2, 4) > margin_eps(2, 6) > 0.0
    assert margin_eps(2, 4) > margin_eps(3, 4) > 0.0


def test_encode_gd_occupies_exactly_the_slot_block():
    n, n_directions = 3, 4
    vec = encode_gd(0b0110, 5, n, n_directions)
    assert vec.shape == (2 * n * n,)
    assert math.isclose(np.linalg.norm(vec), 1.0, rel_tol=1e-12)
    nz = np.nonzero(vec)[0]
    assert set(nz) <= {8, 9}  # slot 5 -> zero-based block 4 -> coords 8, 9
    assert np.allclose(vec[8:10], circle_point(0b0110, n_directions))


def test_encode_sgd_occupies_exactly_the_position_block():
    n, n_directions = 4, 5
    vec = encode_sgd(0b10011, 3, n, n_directions)
    assert vec.shape == (2 * n,)
    assert np.allclose(vec[4:6], circle_point(0b10011, n_directions))
    assert not vec[:4].any() and not vec[6:].any()


def test_encode_rejects_out_of_range_slots():
    with pytest.raises(OutOfRange):
        encode_gd(0b01, 0, 2, 4)
    with pytest.raises(OutOfRange):
        encode_gd(0b01, 5, 2, 4)
    with pytest.raises(OutOfRange):
        encode_sgd(0b01, 3, 2, 4)


def test_decode_blocks_roundtrips_scaled_codepoints():
    n_directions = 6
    mag = 0.05
    vec = np.zeros(8)
    vec[2:4] = mag * circle_point(17, n_directions)
    vec[6:8] = mag * circle_point(63, n_directions)
    assert decode_blocks(vec, n_directions, mag) == [(2, 17), (4, 63)]


def test_decode_blocks_skips_below_occupancy_threshold():
    n_directions = 4
    vec = np.zeros(4)
    vec[0:2] = 0.04 * circle_point(3, n_directions)  # below half of 0.1
    assert decode_blocks(vec, n_directions, 0.1) == []
    # explicit lower threshold picks it up again (norm matches 0.04 fine)
    assert decode_blocks(vec, n_directions, 0.04, occupancy_threshold=0.02) \
        == [(1, 3)]


def test_decode_blocks_flags_superposed_codepoints():
    n_directions = 4
    vec = np.zeros(2)
    vec[:] = 0.1 * (circle_point(1, n_directions) + circle_point(2, n_directions))
    with pytest.raises(AmbiguousBlock):
        decode_blocks(vec, n_directions, 0.1)


def test_alpha_gd_picks_lowest_uncovered_direction():
    assert alpha_gd([0b011, 0b001], 3) == 3
    assert alpha_gd([0b110], 3) == 1
    assert alpha_gd([0b0101, 0b0001], 4) == 2
    # full cover falls back to the top index so callers always get a vector
    assert alpha_gd([full_mask(3)], 3) == 3


def test_alpha_sgd_picks_lowest_common_direction():
    assert alpha_sgd([0b110, 0b100], 3) == 3
    assert alpha_sgd([0b111, 0b110, 0b010], 3) == 2
    # empty intersection falls back to the top index
    assert alpha_sgd([0b001, 0b100], 3) == 3


def test_layout_views_partition_the_vector():
    lay = EncodingLayout(encoding_dim=8, block_dim=3, n_blocks=4)
    assert lay.total_dim == 8 + 12
    w = np.arange(lay.total_dim, dtype=float)
    assert np.array_equal(lay.encoding(w), w[:8])
    assert np.array_equal(lay.block(w, 1), w[8:11])
    assert np.array_equal(lay.block(w, 4), w[17:20])
    # views write through
    lay.block(w, 2)[:] = -1.0
    assert np.array_equal(w[11:14], [-1.0, -1.0, -1.0])
    with pytest.raises(OutOfRange):
        lay.block(w, 0)
    with pytest.raises(OutOfRange):
        lay.block(w, 5)


def test_layout_views_work_batched():
    lay = EncodingLayout(encoding_dim=4, block_dim=2, n_blocks=2)
    w = np.zeros((3, lay.total_dim))
    assert lay.encoding(w).shape == (3, 4)
    assert lay.block(w, 2).shape == (3, 2)


if __name__ == "__main__":
    n_directions = 4
    for mask in (0, 1, 9, 15):
        print(mask, circle_point(mask, n_directions))
