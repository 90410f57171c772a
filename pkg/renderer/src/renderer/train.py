"""Adversarial training loop.

One step generates a batch of teacher-forced frames, updates the critics
with a least-squares objective, then updates the generator against all
branches plus feature-matching and reconstruction L1 terms.  Frames are
drawn as contiguous runs so the dynamics critics always see real temporal
windows.
"""

from __future__ import annotations

import json
import logging
import os

import torch
import torch.nn.functional as F

from .config import DiscriminatorSetConfig, GeneratorConfig, RendererConfig, TrainConfig
from .data import ConditioningDataset
from .errors import DataError
from .models import DiscriminatorSet, Generator
from .ops import dynamics_stacks, mouth_crop

log = logging.getLogger("renderer.train")


def branch_param_vector(module: torch.nn.Module) -> torch.Tensor:
    """Flat copy of all parameters, for measuring update magnitudes."""
    return torch.cat([p.detach().flatten().clone() for p in module.parameters()])


class Trainer:
    def __init__(
        self,
        dataset: ConditioningDataset,
        gen_cfg: GeneratorConfig,
        disc_cfg: DiscriminatorSetConfig,
        train_cfg: TrainConfig,
    ):
        self.dataset = dataset
        self.gen_cfg = gen_cfg
        self.disc_cfg = disc_cfg
        self.train_cfg = train_cfg
        self.run_len = (disc_cfg.dynamics_window - 1) * max(disc_cfg.dynamics_strides) + 1
        if dataset.count < self.run_len:
            raise DataError(
                f"dataset too short for training runs: {dataset.count} frames, "
                f"need {self.run_len} for the coarsest dynamics scale"
            )
        torch.manual_seed(train_cfg.seed)
        self.generator = Generator(gen_cfg)
        self.discriminators = DiscriminatorSet(disc_cfg, cond_channels=6)
        betas = (0.5, 0.999)
        self.opt_g = torch.optim.Adam(self.generator.parameters(), lr=train_cfg.lr_g, betas=betas)
        self.opt_d = torch.optim.Adam(self.discriminators.parameters(), lr=train_cfg.lr_d, betas=betas)
        self.history: list[dict] = []

    def runs_for_epoch(self, epoch: int) -> list[list[int]]:
        """Shuffled contiguous runs of run_len frames covering the dataset."""
        count = self.dataset.count
        starts = list(range(0, count - self.run_len + 1, self.run_len))
        if starts[-1] != count - self.run_len:
            starts.append(count - self.run_len)
        g = torch.Generator().manual_seed(self.train_cfg.seed * 100003 + epoch)
        order = torch.randperm(len(starts), generator=g).tolist()
        return [list(range(starts[i], starts[i] + self.run_len)) for i in order]

    def _branch_inputs(self, cond: torch.Tensor, frames: torch.Tensor, rois, n_runs: int):
        """Per-branch input tensors for a set of frames (real or generated)."""
        cond_current = cond[:, -6:]
        inputs = {"image": torch.cat([cond_current, frames], dim=1)}
        per_run = frames.reshape(n_runs, self.run_len, *frames.shape[1:])
        window = self.disc_cfg.dynamics_window
        strides = self.disc_cfg.dynamics_strides
        parts: dict[int, list[torch.Tensor]] = {s: [] for s in strides}
        for r in range(n_runs):
            stacks = dynamics_stacks(per_run[r], window=window, strides=strides)
            for s in strides:
                parts[s].append(stacks[s])
        for s in strides:
            inputs[f"dynamics_s{s}"] = torch.cat(parts[s], dim=0)
        crops = [
            mouth_crop(frames[i], rois[i], out_size=self.disc_cfg.mouth_size)
            for i in range(frames.shape[0])
        ]
        inputs["mouth"] = torch.stack(crops, dim=0)
        return inputs

    def _generator_objective(self, cond, prev, target, rois, n_runs):
        """Total G loss and its components on one batch, differentiable."""
        fake = self.generator(cond, prev)
        fake_in = self._branch_inputs(cond, fake, rois, n_runs)
        with torch.no_grad():
            real_in = self._branch_inputs(cond, target, rois, n_runs)
        adv = {}
        fm_terms = []
        for name, branch in self.discriminators.branches():
            logits, feats_fake = branch(fake_in[name])
            adv[name] = F.mse_loss(logits, torch.ones_like(logits))
            with torch.no_grad():
                _, feats_real = branch(real_in[name])
            fm_terms.append(
                torch.stack([
                    F.l1_loss(ff, fr) for ff, fr in zip(feats_fake, feats_real)
                ]).mean()
            )
        fm = torch.stack(fm_terms).mean()
        l1 = F.l1_loss(fake, target)
        total = (
            torch.stack(list(adv.values())).sum()
            + self.train_cfg.feature_matching_weight * fm
            + self.train_cfg.reconstruction_weight * l1
        )
        return total, fake, adv, fm, l1

    def generator_loss(self, runs: list[list[int]]) -> float:
        """Current total generator loss on the given runs, no updates."""
        flat = [t for run in runs for t in run]
        cond, prev, target, rois = self.dataset.batch(flat)
        with torch.no_grad():
            total, _, _, _, _ = self._generator_objective(cond, prev, target, rois, len(runs))
        return float(total.item())

    def step(self, runs: list[list[int]], update_d: bool = True) -> dict:
        """One optimization step over a group of contiguous runs."""
        flat = [t for run in runs for t in run]
        cond, prev, target, rois = self.dataset.batch(flat)
        n_runs = len(runs)

        d_loss_value = 0.0
        if update_d:
            with torch.no_grad():
                fake_frames = self.generator(cond, prev)
            real_in = self._branch_inputs(cond, target, rois, n_runs)
            fake_in = self._branch_inputs(cond, fake_frames, rois, n_runs)
            self.opt_d.zero_grad(set_to_none=True)
            d_loss = cond.new_zeros(())
            for name, branch in self.discriminators.branches():
                real_logits, _ = branch(real_in[name])
                fake_logits, _ = branch(fake_in[name])
                d_loss = d_loss + 0.5 * (
                    F.mse_loss(real_logits, torch.ones_like(real_logits))
                    + F.mse_loss(fake_logits, torch.zeros_like(fake_logits))
                )
            d_loss.backward()
            self.opt_d.step()
            d_loss_value = float(d_loss.item())

        self.opt_g.zero_grad(set_to_none=True)
        total, fake, adv, fm, l1 = self._generator_objective(cond, prev, target, rois, n_runs)
        total.backward()
        self.opt_g.step()

        return {
            "loss_g": float(total.item()),
            "loss_d": d_loss_value,
            "adv_g": {name: float(v.item()) for name, v in adv.items()},
            "feature_matching": float(fm.item()),
            # Report reconstruction in [0, 1] image units; tensors live in [-1, 1].
            "l1_to_real": float(l1.item()) / 2.0,
        }

    def run_epoch(self, epoch: int) -> dict:
        before = {name: branch_param_vector(m) for name, m in self.discriminators.branches()}
        g_before = branch_param_vector(self.generator)
        runs = self.runs_for_epoch(epoch)
        batch = self.train_cfg.batch
        sums: dict[str, float] = {}
        adv_sums: dict[str, float] = {}
        steps = 0
        for i in range(0, len(runs), batch):
            stats = self.step(runs[i : i + batch])
            steps += 1
            for key in ("loss_g", "loss_d", "feature_matching", "l1_to_real"):
                sums[key] = sums.get(key, 0.0) + stats[key]
            for name, v in stats["adv_g"].items():
                adv_sums[name] = adv_sums.get(name, 0.0) + v
        metrics = {
            "epoch": epoch,
            "steps": steps,
            "loss_g": sums["loss_g"] / steps,
            "loss_d": sums["loss_d"] / steps,
            "feature_matching": sums["feature_matching"] / steps,
            "l1_to_real": sums["l1_to_real"] / steps,
            "adv_g": {name: v / steps for name, v in adv_sums.items()},
            "generator_delta": float((branch_param_vector(self.generator) - g_before).norm().item()),
            "branch_deltas": {
                name: float((branch_param_vector(m) - before[name]).norm().item())
                for name, m in self.discriminators.branches()
            },
        }
        self.history.append(metrics)
        log.info(
            "epoch %d: steps=%d g=%.4f d=%.4f fm=%.4f l1=%.4f",
            epoch, steps, metrics["loss_g"], metrics["loss_d"],
            metrics["feature_matching"], metrics["l1_to_real"],
        )
        return metrics


def save_checkpoint(
    out_dir: str,
    generator: Generator,
    discriminators: DiscriminatorSet,
    gen_cfg: GeneratorConfig,
    disc_cfg: DiscriminatorSetConfig,
    train_cfg: TrainConfig,
    manifest_hash: str,
    history: list[dict],
) -> str:
    os.makedirs(out_dir, exist_ok=True)
    torch.save(
        {"generator": generator.state_dict(), "discriminators": discriminators.state_dict()},
        os.path.join(out_dir, "weights.pt"),
    )
    config = RendererConfig(generator=gen_cfg, discriminators=disc_cfg).to_dict()
    config["train"] = train_cfg.to_dict()
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "manifest_hash"), "w", encoding="utf-8") as fh:
        fh.write(manifest_hash + "\n")
    with open(os.path.join(out_dir, "history.json"), "w", encoding="utf-8") as fh:
        json.dump(history, fh, indent=2)
        fh.write("\n")
    return out_dir


def train(
    dataset_dir: str,
    out_dir: str,
    gen_cfg: GeneratorConfig | None = None,
    disc_cfg: DiscriminatorSetConfig | None = None,
    train_cfg: TrainConfig | None = None,
) -> str:
    """Trains on one exported dataset; returns the checkpoint directory."""
    gen_cfg = gen_cfg or GeneratorConfig()
    disc_cfg = disc_cfg or DiscriminatorSetConfig()
    train_cfg = train_cfg or TrainConfig()
    dataset = ConditioningDataset(dataset_dir, gen_cfg)
    trainer = Trainer(dataset, gen_cfg, disc_cfg, train_cfg)
    for epoch in range(train_cfg.epochs):
        trainer.run_epoch(epoch)
    return save_checkpoint(
        out_dir,
        trainer.generator,
        trainer.discriminators,
        gen_cfg,
        disc_cfg,
        train_cfg,
        dataset.manifest_hash,
        trainer.history,
    )
