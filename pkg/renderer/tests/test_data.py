"""Conditioning-dataset loading: layout checks, tensor conversion, windows."""

import hashlib
import json
import os

import numpy as np
import pytest
import torch
from PIL import Image

from datasets import write_dataset
from renderer.config import GeneratorConfig
from renderer.data import ConditioningDataset, scale_roi
from renderer.errors import DataError


def cfg64(**overrides):
    base = dict(frame_size=64, cond_window=3, prev_outputs=2, base_channels=8, residual_blocks=1)
    base.update(overrides)
    return GeneratorConfig(**base)


@pytest.fixture()
def dataset_dir(tmp_path):
    write_dataset(tmp_path / "ds", count=10, size=64, seed=3)
    return tmp_path / "ds"


class TestLoading:
    def test_counts_and_metadata(self, dataset_dir):
        ds = ConditioningDataset(str(dataset_dir), cfg64())
        assert ds.count == 10
        assert ds.fps == 25.0
        assert ds.profile_label == "unit"
        assert ds.nmfc.shape == (10, 3, 64, 64)
        assert ds.gaze.shape == (10, 3, 64, 64)
        assert ds.real.shape == (10, 3, 64, 64)

    def test_pixels_are_tanh_scaled_exactly(self, dataset_dir):
        ds = ConditioningDataset(str(dataset_dir), cfg64())
        raw = np.asarray(Image.open(dataset_dir / "nmfc" / "000000.png").convert("RGB"))
        expected = torch.from_numpy(raw.astype(np.float32) / 127.5 - 1.0).permute(2, 0, 1)
        assert torch.equal(ds.nmfc[0], expected)
        assert ds.real.min().item() >= -1.0 and ds.real.max().item() <= 1.0

    def test_manifest_hash_is_sha256_of_file_bytes(self, dataset_dir):
        ds = ConditioningDataset(str(dataset_dir), cfg64())
        with open(dataset_dir / "manifest.json", "rb") as fh:
            assert ds.manifest_hash == hashlib.sha256(fh.read()).hexdigest()

    def test_resize_to_frame_size_scales_images_and_rois(self, tmp_path):
        write_dataset(tmp_path / "big", count=6, size=128, seed=4,
                      rois=[[32, 40, 48, 48]] * 6)
        ds = ConditioningDataset(str(tmp_path / "big"), cfg64())
        assert ds.nmfc.shape == (6, 3, 64, 64)
        assert ds.rois[0] == (16, 20, 24, 24)

    def test_missing_real_dir_rejected(self, tmp_path):
        write_dataset(tmp_path / "norc", count=6, size=64, with_real=False)
        with pytest.raises(DataError, match="real"):
            ConditioningDataset(str(tmp_path / "norc"), cfg64())

    def test_missing_nmfc_file_is_manifest_mismatch(self, dataset_dir):
        os.remove(dataset_dir / "nmfc" / "000004.png")
        with pytest.raises(DataError, match="manifest"):
            ConditioningDataset(str(dataset_dir), cfg64())

    def test_extra_real_file_is_manifest_mismatch(self, dataset_dir):
        Image.new("RGB", (64, 64)).save(dataset_dir / "real" / "000010.png")
        with pytest.raises(DataError, match="manifest"):
            ConditioningDataset(str(dataset_dir), cfg64())

    def test_missing_manifest_rejected(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(DataError):
            ConditioningDataset(str(tmp_path / "empty"), cfg64())

    def test_manifest_missing_key_rejected(self, dataset_dir):
        path = dataset_dir / "manifest.json"
        manifest = json.loads(path.read_text())
        del manifest["mouth_rois"]
        path.write_text(json.dumps(manifest))
        with pytest.raises(DataError, match="mouth_rois"):
            ConditioningDataset(str(dataset_dir), cfg64())

    def test_roi_count_mismatch_rejected(self, dataset_dir):
        path = dataset_dir / "manifest.json"
        manifest = json.loads(path.read_text())
        manifest["mouth_rois"] = manifest["mouth_rois"][:-1]
        path.write_text(json.dumps(manifest))
        with pytest.raises(DataError, match="mouth_rois"):
            ConditioningDataset(str(dataset_dir), cfg64())


class TestWindows:
    def test_window_channels_are_chronological(self, dataset_dir):
        ds = ConditioningDataset(str(dataset_dir), cfg64())
        win = ds.window(5)
        assert win.cond.shape == (18, 64, 64)
        # Oldest pair first: frames 3, 4, 5.
        for slot, frame in enumerate((3, 4, 5)):
            assert torch.equal(win.cond[slot * 6 : slot * 6 + 3], ds.nmfc[frame])
            assert torch.equal(win.cond[slot * 6 + 3 : slot * 6 + 6], ds.gaze[frame])

    def test_bootstrap_repeats_first_conditioning_pair(self, dataset_dir):
        ds = ConditioningDataset(str(dataset_dir), cfg64())
        win = ds.window(0)
        assert torch.equal(win.cond[:6], win.cond[6:12])
        assert torch.equal(win.cond[6:12], win.cond[12:18])

    def test_prev_frames_are_teacher_forced_reals(self, dataset_dir):
        ds = ConditioningDataset(str(dataset_dir), cfg64())
        win = ds.window(4)
        assert win.prev.shape == (6, 64, 64)
        assert torch.equal(win.prev[:3], ds.real[2])
        assert torch.equal(win.prev[3:], ds.real[3])

    def test_prev_frames_bootstrap_to_black(self, dataset_dir):
        ds = ConditioningDataset(str(dataset_dir), cfg64())
        win = ds.window(0)
        # Black in tanh scale is -1.
        assert win.prev.eq(-1.0).all()
        win1 = ds.window(1)
        assert win1.prev[:3].eq(-1.0).all()
        assert torch.equal(win1.prev[3:], ds.real[0])

    def test_target_and_roi(self, dataset_dir):
        ds = ConditioningDataset(str(dataset_dir), cfg64())
        win = ds.window(7)
        assert torch.equal(win.target, ds.real[7])
        assert win.roi == ds.rois[7]

    def test_batch_assembly(self, dataset_dir):
        ds = ConditioningDataset(str(dataset_dir), cfg64())
        cond, prev, target, rois = ds.batch([2, 5, 9])
        assert cond.shape == (3, 18, 64, 64)
        assert prev.shape == (3, 6, 64, 64)
        assert target.shape == (3, 3, 64, 64)
        assert torch.equal(target[1], ds.real[5])
        assert rois == [ds.rois[2], ds.rois[5], ds.rois[9]]


class TestScaleRoi:
    def test_identity_when_sizes_match(self):
        assert scale_roi((10, 12, 20, 24), (64, 64), 64) == (10, 12, 20, 24)

    def test_exact_halving(self):
        assert scale_roi((32, 40, 48, 48), (128, 128), 64) == (16, 20, 24, 24)

    def test_clamped_to_frame(self):
        x, y, w, h = scale_roi((100, 100, 28, 28), (128, 128), 64)
        assert x + w <= 64 and y + h <= 64

    def test_too_small_after_scaling_rejected(self):
        with pytest.raises(DataError, match="roi"):
            scale_roi((0, 0, 10, 10), (256, 256), 64)
