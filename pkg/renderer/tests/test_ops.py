"""Tensor ops against the brute-force oracles in oracles.py."""

import pytest
import torch

import oracles
from renderer.errors import DataError
from renderer.ops import MIN_MOUTH_ROI, dynamics_stacks, mouth_crop


class TestDynamicsStacks:
    def test_counts_match_oracle_and_formula(self):
        g = torch.Generator().manual_seed(1)
        for length in (5, 6, 7, 10, 23):
            frames = torch.rand((length, 3, 8, 8), generator=g)
            stacks = dynamics_stacks(frames, window=3, strides=(1, 2))
            assert set(stacks.keys()) == {1, 2}
            for s in (1, 2):
                expected = oracles.enumerate_windows(length, 3, s)
                assert stacks[s].shape == (len(expected), 9, 8, 8)
                assert len(expected) == length - 2 * s

    def test_stacks_bitwise_equal_oracle(self):
        g = torch.Generator().manual_seed(2)
        frames = torch.rand((11, 3, 6, 5), generator=g)
        stacks = dynamics_stacks(frames, window=3, strides=(1, 2))
        for s in (1, 2):
            assert torch.equal(stacks[s], oracles.stack_windows(frames, 3, s))

    def test_channel_order_is_increasing_time(self):
        frames = torch.arange(7, dtype=torch.float32).reshape(7, 1, 1, 1).expand(7, 2, 3, 3)
        stacks = dynamics_stacks(frames, window=3, strides=(2,))
        first = stacks[2][0]
        # Window starting at 0 with stride 2 holds frames 0, 2, 4 in order.
        assert first[:2].eq(0).all() and first[2:4].eq(2).all() and first[4:6].eq(4).all()

    def test_shortest_legal_sequence_has_one_coarse_window(self):
        frames = torch.zeros((5, 3, 4, 4))
        stacks = dynamics_stacks(frames, window=3, strides=(1, 2))
        assert stacks[1].shape[0] == 3
        assert stacks[2].shape[0] == 1

    def test_too_short_sequence_rejected(self):
        frames = torch.zeros((4, 3, 4, 4))
        with pytest.raises(DataError, match="too short"):
            dynamics_stacks(frames, window=3, strides=(1, 2))

    def test_other_window_sizes(self):
        g = torch.Generator().manual_seed(3)
        frames = torch.rand((9, 2, 4, 4), generator=g)
        stacks = dynamics_stacks(frames, window=2, strides=(1, 3))
        for s in (1, 3):
            assert torch.equal(stacks[s], oracles.stack_windows(frames, 2, s))

    def test_list_of_frames_accepted(self):
        g = torch.Generator().manual_seed(4)
        frames = [torch.rand((3, 4, 4), generator=g) for _ in range(6)]
        stacks = dynamics_stacks(frames, window=3, strides=(1,))
        assert torch.equal(stacks[1], oracles.stack_windows(torch.stack(frames), 3, 1))


class TestMouthCrop:
    def test_aligned_roi_is_exact_gather(self):
        g = torch.Generator().manual_seed(5)
        image = torch.rand((3, 40, 40), generator=g)
        out = mouth_crop(image, (5, 7, 16, 16), out_size=16)
        assert torch.equal(out, oracles.gather_crop(image, 5, 7, 16, 16))

    def test_resize_matches_bilinear_oracle(self):
        g = torch.Generator().manual_seed(6)
        image = torch.rand((3, 32, 48), generator=g)
        out = mouth_crop(image, (3, 2, 28, 20), out_size=16)
        crop = oracles.gather_crop(image, 3, 2, 28, 20)
        ref = oracles.bilinear_resize(crop, 16, 16)
        assert out.shape == (3, 16, 16)
        assert (out.to(torch.float64) - ref).abs().max().item() < 1e-5

    def test_upscale_matches_bilinear_oracle(self):
        g = torch.Generator().manual_seed(7)
        image = torch.rand((3, 24, 24), generator=g)
        out = mouth_crop(image, (4, 4, 10, 9), out_size=16)
        crop = oracles.gather_crop(image, 4, 4, 10, 9)
        ref = oracles.bilinear_resize(crop, 16, 16)
        assert (out.to(torch.float64) - ref).abs().max().item() < 1e-5

    def test_full_frame_roi_is_whole_image_resize(self):
        g = torch.Generator().manual_seed(8)
        image = torch.rand((3, 20, 20), generator=g)
        out = mouth_crop(image, (0, 0, 20, 20), out_size=12)
        ref = oracles.bilinear_resize(image, 12, 12)
        assert (out.to(torch.float64) - ref).abs().max().item() < 1e-5

    def test_minimum_roi_side_enforced(self):
        image = torch.zeros((3, 32, 32))
        with pytest.raises(DataError, match="roi"):
            mouth_crop(image, (0, 0, MIN_MOUTH_ROI - 1, 16), out_size=16)
        with pytest.raises(DataError, match="roi"):
            mouth_crop(image, (0, 0, 1, 1), out_size=16)

    def test_out_of_bounds_rejected(self):
        image = torch.zeros((3, 32, 32))
        for roi in ((-1, 0, 16, 16), (0, -2, 16, 16), (20, 0, 16, 16), (0, 25, 16, 16)):
            with pytest.raises(DataError, match="bounds"):
                mouth_crop(image, roi, out_size=16)

    def test_batched_input(self):
        g = torch.Generator().manual_seed(9)
        batch = torch.rand((2, 3, 30, 30), generator=g)
        out = mouth_crop(batch, (2, 3, 20, 20), out_size=16)
        assert out.shape == (2, 3, 16, 16)
        for b in range(2):
            single = mouth_crop(batch[b], (2, 3, 20, 20), out_size=16)
            assert torch.equal(out[b], single)

    def test_integer_input_converted_to_float(self):
        image = (torch.rand((3, 24, 24), generator=torch.Generator().manual_seed(10)) * 255).to(torch.uint8)
        out = mouth_crop(image, (0, 0, 16, 16), out_size=16)
        assert out.dtype == torch.float32
        assert torch.equal(out, image[:, :16, :16].to(torch.float32))
