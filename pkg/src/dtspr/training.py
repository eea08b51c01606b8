"""Clip sampling, the training loop, and dense online evaluation.

Clips follow the online protocol: 16 frames at a sampling rate of 4, indices
clamped at the start of the video, prediction for the last frame.  Training
shuffles (video, frame) pairs each epoch with a seeded generator, so a run
is a pure function of its configuration and seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .corrupt import CorruptionSpec, combined
from .frames import load_dataset
from .model import ClipBatch, Model, ModelConfig, build_variant, predict
from .synth import derive_seed


@dataclass(frozen=True)
class ClipSpec:
    """Online clip sampler settings: frame t gets frames t - rate*(len-1) .. t."""

    length: int = 16
    rate: int = 4


def sample_clip(n_frames: int, t: int, spec: ClipSpec = ClipSpec()) -> np.ndarray:
    """Ordered frame indices for the clip ending at frame t.

    Indices below zero clamp to 0; the last index is always t, so the clip
    never looks past t.
    """
    if not 0 <= t < n_frames:
        raise ValueError(f"t={t} out of range for a {n_frames}-frame video")
    idx = t - spec.rate * (spec.length - 1 - np.arange(spec.length))
    return np.maximum(idx, 0)


@dataclass
class LoadedVideo:
    """A sequence unpacked into model-ready arrays (float32 until batching)."""

    video_id: str
    domain: str
    phases: np.ndarray        # (T,) int64
    dt_stack: np.ndarray      # (T, 11, H, W) float32: masks then disparity
    mask_tokens: np.ndarray   # (T, 10, 257) float32
    depth_tokens: np.ndarray  # (T, D) float32
    rgb: np.ndarray | None    # (T, H, W, 3) uint8

    @property
    def n_frames(self) -> int:
        return len(self.phases)


def load_videos(dataset_dir) -> list[LoadedVideo]:
    out = []
    for seq in load_dataset(dataset_dir):
        t = seq.n_frames
        stack = np.empty((t, 11, seq.height, seq.width), dtype=np.float32)
        tokens = np.empty((t, 10, 257), dtype=np.float32)
        depth = np.empty((t, seq.frames[0].depth_token.shape[0]), dtype=np.float32)
        for i, f in enumerate(seq.frames):
            stack[i, :10] = f.masks
            stack[i, 10] = f.disparity
            tokens[i] = f.mask_tokens
            depth[i] = f.depth_token
        out.append(LoadedVideo(video_id=seq.video_id, domain=seq.domain,
                               phases=seq.phases(), dt_stack=stack,
                               mask_tokens=tokens, depth_tokens=depth, rgb=seq.rgb))
    return out


def check_dataset_compatible(videos: list[LoadedVideo], config: ModelConfig) -> None:
    if not videos:
        raise ValueError("dataset is empty")
    if config.needs_rgb and any(v.rgb is None for v in videos):
        raise ValueError(f"variant {config.variant!r} needs RGB but the dataset has none")
    d = videos[0].depth_tokens.shape[1]
    if config.uses_depth_tokens and d != config.depth_token_dim:
        raise ValueError(f"dataset depth tokens have {d} dims, model expects {config.depth_token_dim}")
    h, w = videos[0].dt_stack.shape[2:]
    if h % config.patch_size or w % config.patch_size:
        raise ValueError(f"dataset frames {h}x{w} not divisible by patch size {config.patch_size}")


def _spatial_channels(video: LoadedVideo, idx: np.ndarray, variant: str,
                      rgb_override: np.ndarray | None = None) -> np.ndarray:
    """(T, C, H, W) float32 input for one clip; rgb_override replaces the
    gathered RGB frames (already clip-shaped) when provided."""
    if variant == "dt":
        return video.dt_stack[idx]
    if variant == "depth":
        return video.dt_stack[idx][:, 10:11]
    if variant == "mask":
        return video.dt_stack[idx][:, :10]
    rgb = rgb_override if rgb_override is not None else video.rgb[idx]
    rgb = (rgb.astype(np.float32) / 255.0).transpose(0, 3, 1, 2)
    if variant == "raw":
        return rgb
    if variant == "raw_dtaug":
        return np.concatenate([rgb, video.dt_stack[idx]], axis=1)
    raise ValueError(f"unknown variant {variant!r}")


def build_batch(videos: list[LoadedVideo], pairs: list[tuple[int, int]],
                config: ModelConfig, spec: ClipSpec,
                corrupt_rng: np.random.Generator | None = None) -> tuple[ClipBatch, np.ndarray]:
    """Assemble a ClipBatch plus last-frame labels for (video, t) pairs.

    With ``corrupt_rng`` set, each clip's RGB is corrupted with severities
    drawn uniformly from 0..2 per transform (train-time augmentation).
    """
    spatial, tables, depths, labels = [], [], [], []
    for vi, t in pairs:
        v = videos[vi]
        idx = sample_clip(v.n_frames, t, spec)
        rgb_override = None
        if corrupt_rng is not None and config.needs_rgb:
            sev = corrupt_rng.integers(0, 3, 3)
            rgb_override = v.rgb[idx]
            cspec = CorruptionSpec(int(sev[0]), int(sev[1]), int(sev[2]))
            if not cspec.is_identity:
                rgb_override = np.stack([combined(fr, cspec) for fr in rgb_override])
        spatial.append(_spatial_channels(v, idx, config.variant, rgb_override))
        if config.uses_mask_tokens:
            tables.append(v.mask_tokens[idx])
        if config.uses_depth_tokens:
            depths.append(v.depth_tokens[idx])
        labels.append(v.phases[t])
    return ClipBatch(
        spatial=np.stack(spatial).astype(np.float64),
        mask_tokens=np.stack(tables).astype(np.float64) if tables else None,
        depth_tokens=np.stack(depths).astype(np.float64) if depths else None,
    ), np.array(labels)


@dataclass
class TrainConfig:
    """Training hyperparameters; the defaults follow the online protocol."""

    variant: str
    lr: float = 5e-4
    epochs: int = 30
    batch: int = 8
    seed: int = 0
    train_corrupt: bool = False
    clip: ClipSpec = field(default_factory=ClipSpec)
    weight_decay: float = 0.05
    target_accuracy: float | None = None  # early stop for overfit probes

    def __post_init__(self):
        if min(self.lr, self.epochs, self.batch) <= 0:
            raise ValueError("lr, epochs, and batch must be positive")


@dataclass
class TrainResult:
    model: Model
    log_lines: list[str]  # "epoch\tloss\ttrain_acc"


def train(train_cfg: TrainConfig, model_cfg: ModelConfig,
          videos: list[LoadedVideo]) -> TrainResult:
    """Cross-entropy training on last-frame phases over all (video, t) pairs.

    Each epoch iterates a seeded shuffle of every pair; the result is
    bit-reproducible for a fixed (config, seed).
    """
    if train_cfg.variant != model_cfg.variant:
        raise ValueError(f"train variant {train_cfg.variant!r} != model variant {model_cfg.variant!r}")
    check_dataset_compatible(videos, model_cfg)
    model = build_variant(model_cfg, train_cfg.seed)
    opt = nn.AdamW(model.parameters(), lr=train_cfg.lr, weight_decay=train_cfg.weight_decay)
    shuffle_rng = np.random.default_rng(derive_seed(train_cfg.seed, "train-shuffle"))
    corrupt_rng = np.random.default_rng(derive_seed(train_cfg.seed, "train-corrupt")) \
        if train_cfg.train_corrupt else None

    pairs = [(vi, t) for vi, v in enumerate(videos) for t in range(v.n_frames)]
    log: list[str] = []
    for epoch in range(1, train_cfg.epochs + 1):
        order = shuffle_rng.permutation(len(pairs))
        total_loss = 0.0
        correct = 0
        for lo in range(0, len(order), train_cfg.batch):
            chunk = [pairs[i] for i in order[lo:lo + train_cfg.batch]]
            batch, labels = build_batch(videos, chunk, model_cfg, train_cfg.clip, corrupt_rng)
            opt.zero_grad()
            logits = predict(model, batch)
            loss = nn.cross_entropy(logits, labels)
            loss.backward()
            opt.step()
            total_loss += float(loss.data) * len(chunk)
            correct += int((logits.data.argmax(axis=1) == labels).sum())
        epoch_loss = total_loss / len(pairs)
        epoch_acc = 100.0 * correct / len(pairs)
        log.append(f"{epoch}\t{epoch_loss:.6f}\t{epoch_acc:.2f}")
        if train_cfg.target_accuracy is not None and epoch_acc >= train_cfg.target_accuracy:
            break
    return TrainResult(model=model, log_lines=log)


def evaluate(model: Model, videos: list[LoadedVideo], spec: ClipSpec = ClipSpec(),
             batch_size: int = 32) -> list[np.ndarray]:
    """Dense online predictions: one label per frame of every video."""
    check_dataset_compatible(videos, model.config)
    out = []
    for vi, v in enumerate(videos):
        preds = np.empty(v.n_frames, dtype=np.int64)
        for lo in range(0, v.n_frames, batch_size):
            chunk = [(vi, t) for t in range(lo, min(lo + batch_size, v.n_frames))]
            batch, _ = build_batch(videos, chunk, model.config, spec)
            logits = predict(model, batch)
            preds[lo:lo + len(chunk)] = logits.data.argmax(axis=1)
        out.append(preds)
    return out


def predict_logits_at(model: Model, videos: list[LoadedVideo], pairs: list[tuple[int, int]],
                      spec: ClipSpec = ClipSpec()) -> np.ndarray:
    """Raw logits for specific (video, t) pairs (used by invariance checks)."""
    batch, _ = build_batch(videos, pairs, model.config, spec)
    return predict(model, batch).data


def robustness_report(models: dict[str, Model], datasets: dict[str, list[LoadedVideo]],
                      spec: ClipSpec = ClipSpec()):
    """Evaluate every (model, dataset) cell and return the report rows.

    Render with metrics.rows_to_tsv / rows_to_table; datasets keep their
    given order, which fixes the table's column groups.
    """
    from .metrics import ReportRow, compute_metrics
    rows = []
    for variant, model in models.items():
        for tag, videos in datasets.items():
            preds = evaluate(model, videos, spec)
            rep = compute_metrics(preds, [v.phases for v in videos])
            rows.append(ReportRow.from_report(variant, tag, rep))
    return rows


def write_log(path, lines: list[str]) -> None:
    Path(path).write_text("\n".join(lines) + "\n")
