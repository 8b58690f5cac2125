"""Tests for the per-frame extractors and temporal segment sampling."""

import numpy as np
import pytest

from costream.errors import ConfigError, ContractError
from costream.extractor import (extract, init_extractor_params,
                                preactivation_margin, sample_segments,
                                segment_spans)
from costream.tensor import Tensor, constant


def test_extract_matches_a_manual_mlp():
    rng = np.random.default_rng(0)
    params = init_extractor_params(rng, "f", d_in=5, hidden=7, d_out=6)
    frames = rng.normal(size=(9, 5))
    got = extract(params, constant(frames)).data
    hidden = np.maximum(frames @ params.w1.data + params.b1.data, 0.0)
    want = hidden @ params.w2.data + params.b2.data
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-14)
    assert got.shape == (9, 6)


def test_extract_accepts_raw_arrays():
    rng = np.random.default_rng(1)
    params = init_extractor_params(rng, "f", d_in=4, hidden=5, d_out=3)
    frames = rng.normal(size=(6, 4))
    np.testing.assert_array_equal(extract(params, frames).data,
                                  extract(params, constant(frames)).data)


def test_init_shapes_and_param_names():
    rng = np.random.default_rng(1)
    params = init_extractor_params(rng, "o", d_in=4, hidden=5, d_out=3)
    assert params.w1.shape == (4, 5) and params.b1.shape == (5,)
    assert params.w2.shape == (5, 3) and params.b2.shape == (3,)
    assert set(params.named()) == {"extractor_o.w1", "extractor_o.b1",
                                   "extractor_o.w2", "extractor_o.b2"}
    assert all(p.requires_grad for p in params.named().values())


def test_preactivation_margin_is_the_distance_to_the_nearest_kink():
    rng = np.random.default_rng(3)
    params = init_extractor_params(rng, "f", d_in=4, hidden=6, d_out=5)
    frames = rng.normal(size=(7, 4))
    margin = preactivation_margin(params, frames)
    pre = frames @ params.w1.data + params.b1.data
    assert margin == pytest.approx(np.abs(pre).min(), rel=1e-12)
    assert margin > 0.0


def test_segment_spans_partition_the_sequence():
    for length, k in ((30, 3), (10, 3), (7, 2), (5, 5)):
        spans = segment_spans(length, k)
        assert len(spans) == k
        assert spans[0][0] == 0 and spans[-1][1] == length
        for (a, b), (c, _) in zip(spans, spans[1:]):
            assert b == c  # contiguous, no gaps or overlaps
        sizes = [b - a for a, b in spans]
        assert max(sizes) - min(sizes) <= 1  # near-equal splits


def test_sample_segments_shape_and_provenance():
    rng = np.random.default_rng(4)
    frames = np.arange(60.0).reshape(20, 3)
    out = sample_segments(frames, k_segments=2, snippet=4, rng=rng)
    assert out.shape == (8, 3)
    spans = segment_spans(20, 2)
    for seg, (lo, hi) in enumerate(spans):
        rows = out[seg * 4:(seg + 1) * 4]
        starts = rows[:, 0] / 3.0  # first column encodes the source row index
        assert starts.min() >= lo
        assert starts.max() < hi
        np.testing.assert_array_equal(np.diff(starts), 1.0)  # consecutive rows


def test_sample_segments_with_exact_length_returns_the_whole_sequence():
    frames = np.random.default_rng(5).normal(size=(6, 3))
    out = sample_segments(frames, k_segments=2, snippet=3,
                          rng=np.random.default_rng(0))
    np.testing.assert_array_equal(out, frames)


def test_sample_segments_is_deterministic_per_rng_seed():
    frames = np.random.default_rng(5).normal(size=(15, 4))
    a = sample_segments(frames, 3, 2, np.random.default_rng(9))
    b = sample_segments(frames, 3, 2, np.random.default_rng(9))
    c = sample_segments(frames, 3, 2, np.random.default_rng(10))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sample_segments_validation():
    frames = np.zeros((6, 3))
    with pytest.raises(ConfigError):
        sample_segments(frames, k_segments=3, snippet=4, rng=np.random.default_rng(0))
    with pytest.raises(ConfigError):
        sample_segments(frames, k_segments=0, snippet=2, rng=np.random.default_rng(0))
    with pytest.raises(ConfigError):
        sample_segments(frames, k_segments=2, snippet=0, rng=np.random.default_rng(0))


def test_extract_rejects_bad_shapes():
    rng = np.random.default_rng(6)
    params = init_extractor_params(rng, "f", d_in=4, hidden=5, d_out=3)
    with pytest.raises(ContractError):
        extract(params, Tensor(np.zeros((2, 3, 4))))
    with pytest.raises(ContractError):
        extract(params, Tensor(np.zeros((2, 5))))  # wrong row width
