"""Checkpoint loading and frame synthesis: determinism, bootstrap, errors."""

import json
import os

import numpy as np
import pytest
import torch

from datasets import write_dataset
from renderer.config import DiscriminatorSetConfig, GeneratorConfig, TrainConfig
from renderer.errors import ConfigError
from renderer.infer import FrameSynthesizer, infer_frame, load_checkpoint
from renderer.train import train


def tiny_gen_cfg():
    return GeneratorConfig(frame_size=64, cond_window=3, prev_outputs=2,
                           base_channels=8, residual_blocks=1)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """A briefly trained checkpoint plus its dataset directory."""
    root = tmp_path_factory.mktemp("infer")
    write_dataset(root / "ds", count=10, size=64, seed=21)
    ckpt = train(
        str(root / "ds"),
        str(root / "ckpt"),
        gen_cfg=tiny_gen_cfg(),
        disc_cfg=DiscriminatorSetConfig(dynamics_strides=(1, 2), base_channels=8),
        train_cfg=TrainConfig(epochs=3, batch=2, seed=2),
    )
    return load_checkpoint(ckpt), root / "ds"


def load_pair(ds_dir, i):
    from PIL import Image

    nmfc = np.asarray(Image.open(ds_dir / "nmfc" / ("%06d.png" % i)).convert("RGB"))
    gaze = np.asarray(Image.open(ds_dir / "gaze" / ("%06d.png" % i)).convert("RGB"))
    return nmfc, gaze


class TestInferFrame:
    def test_output_shape_dtype_and_determinism(self, trained):
        loaded, ds = trained
        pair = load_pair(ds, 0)
        black = np.zeros((64, 64, 3), dtype=np.uint8)
        a = infer_frame(loaded, [pair, pair, pair], [black, black])
        b = infer_frame(loaded, [pair, pair, pair], [black, black])
        assert a.shape == (64, 64, 3) and a.dtype == np.uint8
        assert np.array_equal(a, b)

    def test_wrong_window_length_rejected(self, trained):
        loaded, ds = trained
        pair = load_pair(ds, 0)
        black = np.zeros((64, 64, 3), dtype=np.uint8)
        with pytest.raises(ConfigError, match="window"):
            infer_frame(loaded, [pair, pair], [black, black])
        with pytest.raises(ConfigError, match="window"):
            infer_frame(loaded, [pair] * 4, [black, black])

    def test_wrong_prev_count_rejected(self, trained):
        loaded, ds = trained
        pair = load_pair(ds, 0)
        black = np.zeros((64, 64, 3), dtype=np.uint8)
        with pytest.raises(ConfigError, match="previous"):
            infer_frame(loaded, [pair, pair, pair], [black])

    def test_oversized_inputs_are_resized(self, trained):
        loaded, ds = trained
        nmfc, gaze = load_pair(ds, 0)
        big = (np.kron(nmfc, np.ones((2, 2, 1))).astype(np.uint8),
               np.kron(gaze, np.ones((2, 2, 1))).astype(np.uint8))
        black = np.zeros((128, 128, 3), dtype=np.uint8)
        out = infer_frame(loaded, [big, big, big], [black, black])
        assert out.shape == (64, 64, 3)

    def test_black_vs_real_conditioning_gap(self, trained):
        loaded, ds = trained
        pair = load_pair(ds, 3)
        black_pair = (np.zeros((64, 64, 3), dtype=np.uint8),) * 2
        black = np.zeros((64, 64, 3), dtype=np.uint8)
        lit = infer_frame(loaded, [pair, pair, pair], [black, black])
        dark = infer_frame(loaded, [black_pair] * 3, [black, black])
        gap = np.abs(lit.astype(np.float64) - dark.astype(np.float64)).mean() / 255.0
        assert gap > 0.01


class TestFrameSynthesizer:
    def test_bootstrap_matches_explicit_window(self, trained):
        loaded, ds = trained
        synth = FrameSynthesizer(loaded)
        nmfc, gaze = load_pair(ds, 0)
        out = synth.step(nmfc, gaze)
        black = np.zeros((64, 64, 3), dtype=np.uint8)
        pair = (nmfc, gaze)
        direct = infer_frame(loaded, [pair, pair, pair], [black, black])
        assert np.array_equal(out, direct)

    def test_rolling_state_matches_explicit_windows(self, trained):
        loaded, ds = trained
        synth = FrameSynthesizer(loaded)
        pairs = [load_pair(ds, i) for i in range(3)]
        outs = [synth.step(*p) for p in pairs]
        direct = infer_frame(loaded, [pairs[0], pairs[1], pairs[2]], [outs[0], outs[1]])
        third = infer_frame(loaded, [pairs[0], pairs[0], pairs[1]], [np.zeros((64, 64, 3), np.uint8), outs[0]])
        assert np.array_equal(outs[1], third)
        out3 = synth.step(*load_pair(ds, 3))
        window = [pairs[1], pairs[2], load_pair(ds, 3)]
        assert np.array_equal(out3, infer_frame(loaded, window, [outs[1], outs[2]]))
        assert np.array_equal(outs[2], direct)

    def test_reset_restores_bootstrap(self, trained):
        loaded, ds = trained
        synth = FrameSynthesizer(loaded)
        nmfc, gaze = load_pair(ds, 0)
        first = synth.step(nmfc, gaze)
        synth.step(*load_pair(ds, 1))
        synth.reset()
        assert np.array_equal(synth.step(nmfc, gaze), first)


class TestLoadCheckpoint:
    def test_missing_directory_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_checkpoint(str(tmp_path / "nope"))

    def test_architecture_mismatch_rejected(self, trained, tmp_path):
        loaded, _ = trained
        src = loaded.path
        dst = tmp_path / "ckpt"
        import shutil

        shutil.copytree(src, dst)
        cfg = json.loads((dst / "config.json").read_text())
        cfg["generator"]["base_channels"] = 16
        (dst / "config.json").write_text(json.dumps(cfg))
        with pytest.raises(ConfigError, match="weights"):
            load_checkpoint(str(dst))

    def test_corrupt_weights_rejected(self, trained, tmp_path):
        loaded, _ = trained
        dst = tmp_path / "ckpt"
        import shutil

        shutil.copytree(loaded.path, dst)
        (dst / "weights.pt").write_bytes(b"not a torch file")
        with pytest.raises(ConfigError):
            load_checkpoint(str(dst))

    def test_manifest_hash_exposed(self, trained):
        loaded, ds = trained
        import hashlib

        digest = hashlib.sha256((ds / "manifest.json").read_bytes()).hexdigest()
        assert loaded.manifest_hash == digest
