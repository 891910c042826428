"""Losses, learning-rate schedules, and the two training stages.

Stage 1 pretrains the shared encoder with a feature-consistency objective
over groups of composites that share a foreground; stage 2 trains the whole
network end to end with cross-entropy on the mask plus L1 on the alpha.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import yaml

from .data import AugmentConfig, CorpusSampler, Manifest, fc_group_batches
from .imaging import ShapeError, binarize_alpha
from .interactions import InteractionKind, encode_guidance, simulate
from .model import MattingNetwork, stack_input

CE_EPS = 1e-7

TRACE_COLUMNS = ("step", "lr", "loss_ce", "loss_l1", "loss_final", "loss_cons")


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def loss_ce(mask_prob: torch.Tensor, mask_gt: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy of mask probabilities against a 0/1 target."""
    if mask_prob.shape != mask_gt.shape:
        raise ShapeError(f"shape mismatch: {tuple(mask_prob.shape)} vs {tuple(mask_gt.shape)}")
    p = mask_prob.clamp(CE_EPS, 1.0 - CE_EPS)
    return -(mask_gt * torch.log(p) + (1.0 - mask_gt) * torch.log(1.0 - p)).mean()


def loss_l1(alpha_pred: torch.Tensor, alpha_gt: torch.Tensor) -> torch.Tensor:
    """Mean absolute alpha error."""
    if alpha_pred.shape != alpha_gt.shape:
        raise ShapeError(f"shape mismatch: {tuple(alpha_pred.shape)} vs {tuple(alpha_gt.shape)}")
    return (alpha_pred - alpha_gt).abs().mean()


def loss_final(
    mask_prob: torch.Tensor,
    mask_gt: torch.Tensor,
    alpha_pred: torch.Tensor,
    alpha_gt: torch.Tensor,
    lam: float = 1.0,
) -> torch.Tensor:
    """Joint objective: cross-entropy plus lam * L1."""
    if lam < 0:
        raise ValueError("lam must be >= 0")
    return loss_ce(mask_prob, mask_gt) + lam * loss_l1(alpha_pred, alpha_gt)


def _spatial_distributions(features: torch.Tensor) -> torch.Tensor:
    """Per-channel softmax over spatial positions: (G, C, H, W) -> (G, C, HW)."""
    g, c = features.shape[:2]
    flat = features.reshape(g, c, -1)
    return torch.softmax(flat, dim=-1)


def loss_cons(features: torch.Tensor | list[torch.Tensor]) -> torch.Tensor:
    """Mean pairwise Jensen-Shannon divergence across a feature group.

    Each feature map is turned into a per-channel probability distribution
    over spatial positions; the divergence (natural log, bounded by ln 2) is
    averaged over channels and over all unordered pairs in the group.
    """
    if isinstance(features, (list, tuple)):
        features = torch.stack(list(features), dim=0)
    if features.ndim != 4:
        raise ShapeError(f"expected (G, C, H, W) features, got {tuple(features.shape)}")
    g = features.shape[0]
    if g < 2:
        raise ValueError("need at least 2 features to compare")
    dists = _spatial_distributions(features)
    total = features.new_zeros(())
    pairs = 0
    for i in range(g):
        for j in range(i + 1, g):
            p, q = dists[i], dists[j]
            m = 0.5 * (p + q)
            kl_pm = (p * (torch.log(p) - torch.log(m))).sum(dim=-1)
            kl_qm = (q * (torch.log(q) - torch.log(m))).sum(dim=-1)
            total = total + (0.5 * (kl_pm + kl_qm)).mean()
            pairs += 1
    return total / pairs


# ---------------------------------------------------------------------------
# Learning-rate schedules
# ---------------------------------------------------------------------------

def lr_poly(iteration: int, max_iter: int, base_lr: float, power: float = 0.9) -> float:
    """Polynomial decay from base_lr at step 0 to 0 at max_iter."""
    if not 0 <= iteration <= max_iter:
        raise ValueError(f"iteration {iteration} outside [0, {max_iter}]")
    return base_lr * (1.0 - iteration / max_iter) ** power


def lr_warmup_cosine(iteration: int, warmup: int, max_iter: int, base_lr: float) -> float:
    """Linear ramp to base_lr over the warm-up, then cosine decay to 0."""
    if not 0 <= iteration <= max_iter:
        raise ValueError(f"iteration {iteration} outside [0, {max_iter}]")
    if warmup > max_iter:
        raise ValueError("warmup must not exceed max_iter")
    if iteration < warmup:
        return base_lr * iteration / warmup
    if max_iter == warmup:
        return base_lr if iteration == warmup else 0.0
    phase = (iteration - warmup) / (max_iter - warmup)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * phase))


# ---------------------------------------------------------------------------
# Train configuration
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    stage: str = "main"
    base_lr: float = 4e-4
    beta1: float = 0.5
    beta2: float = 0.999
    poly_power: float = 0.9
    warmup_iters: int = 5000
    batch_size: int = 64
    epochs: int = 120
    group_size: int = 2
    batch_groups: int = 2
    lambda_l1: float = 1.0
    crop: int = 64
    augment: bool = True
    interaction: str = "bbox"
    seed: int = 0
    max_steps: int | None = None
    snapshot_every: int = 100

    def __post_init__(self):
        if self.stage not in ("pretrain", "main"):
            raise ValueError("stage must be pretrain or main")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.lambda_l1 < 0:
            raise ValueError("lambda_l1 must be >= 0")
        if self.warmup_iters < 0:
            raise ValueError("warmup_iters must be >= 0")
        self.interaction = InteractionKind(self.interaction).value

    @classmethod
    def full_scale_pretrain(cls) -> "TrainConfig":
        return cls(stage="pretrain", batch_size=160, epochs=20, crop=512, batch_groups=80)

    @classmethod
    def full_scale_main(cls) -> "TrainConfig":
        return cls(stage="main", batch_size=64, epochs=120, crop=512, warmup_iters=5000)

    def to_yaml(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(asdict(self), sort_keys=True))

    @classmethod
    def from_yaml(cls, path) -> "TrainConfig":
        data = yaml.safe_load(Path(path).read_text())
        return cls(**data)


@dataclass
class TrainResult:
    model: MattingNetwork
    trace: list[dict]
    step: int
    aborted: bool = False


def write_trace(path, rows: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=TRACE_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in TRACE_COLUMNS})


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _crop_with_support(fields: list[np.ndarray], alpha: np.ndarray, size: int, rng) -> tuple[list[np.ndarray], np.ndarray]:
    """Shared random crop keeping some alpha support; centers as last resort."""
    h, w = alpha.shape
    if h < size or w < size:
        raise ValueError(f"image {h}x{w} smaller than crop {size}")
    for _ in range(20):
        r0 = int(rng.integers(0, h - size + 1))
        c0 = int(rng.integers(0, w - size + 1))
        window = alpha[r0 : r0 + size, c0 : c0 + size]
        if window.sum() > 0:
            return [f[r0 : r0 + size, c0 : c0 + size] for f in fields], window
    r0, c0 = (h - size) // 2, (w - size) // 2
    return (
        [f[r0 : r0 + size, c0 : c0 + size] for f in fields],
        alpha[r0 : r0 + size, c0 : c0 + size],
    )


# ---------------------------------------------------------------------------
# Stage 1: consistency pretraining of the encoder
# ---------------------------------------------------------------------------

def pretrain_fc(
    config: TrainConfig,
    root,
    manifest: Manifest,
    model: MattingNetwork,
) -> TrainResult:
    """Optimize the pairwise feature-consistency loss over encoder weights.

    Each batch holds groups of composites sharing a foreground; the guidance
    channel is simulated once per group from the shared matte, so group
    members differ only in their background content (and color jitter). The
    loss averages over every encoder pyramid stage: the decoders consume all
    stages through skip connections, so consistency only at the top would
    leave the skip paths noisy.
    """
    from .data import color_jitter
    from .imaging import load_alpha, load_image

    torch.manual_seed(config.seed)
    root = Path(root)
    opt = torch.optim.Adam(
        model.encoder_parameters(), lr=config.base_lr, betas=(config.beta1, config.beta2)
    )
    records = {rec.sample_id: rec for rec in manifest.records}
    plans = [
        fc_group_batches(manifest, config.group_size, config.batch_groups, _derive_seed(config.seed, epoch))
        for epoch in range(config.epochs)
    ]
    max_iter = sum(len(p) for p in plans)
    if config.max_steps is not None:
        max_iter = min(max_iter, config.max_steps)
    trace: list[dict] = []
    step = 0
    model.train()
    for epoch, plan in enumerate(plans):
        for batch_idx, batch in enumerate(plan):
            if step >= max_iter:
                break
            lr = lr_poly(step, max_iter, config.base_lr, config.poly_power)
            for pg in opt.param_groups:
                pg["lr"] = lr
            group_losses = []
            for group_idx, group in enumerate(batch):
                rng = np.random.default_rng(_derive_seed(config.seed, epoch, batch_idx, group_idx))
                alpha = load_alpha(root / records[group[0]].alpha_path)
                images = [load_image(root / records[sid].composite_path) for sid in group]
                images, alpha_c = _crop_with_support(images, alpha, config.crop, rng)
                if config.augment:
                    images = [color_jitter(img, rng) for img in images]
                inter = simulate(config.interaction, alpha_c, seed=int(rng.integers(0, 2**31)))
                guidance = encode_guidance(inter, *alpha_c.shape)
                x = torch.stack([torch.from_numpy(stack_input(img, guidance)) for img in images])
                pyramid = model.encode(x)
                group_losses.append(torch.stack([loss_cons(s) for s in pyramid]).mean())
            loss = torch.stack(group_losses).mean()
            opt.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.encoder.parameters(), 1.0)
            opt.step()
            trace.append({"step": step, "lr": lr, "loss_cons": float(loss.item())})
            step += 1
        if step >= max_iter:
            break
    return TrainResult(model=model, trace=trace, step=step)


# ---------------------------------------------------------------------------
# Stage 2: end-to-end training with the joint loss
# ---------------------------------------------------------------------------

def _build_batch(sampler: CorpusSampler, records, seeds, config: TrainConfig):
    xs, masks, alphas = [], [], []
    for record, seed in zip(records, seeds):
        rng = np.random.default_rng(seed)
        for attempt in range(20):
            image, alpha = sampler.sample(record, _derive_seed(seed, attempt), augment=config.augment)
            if alpha.sum() > 0:
                break
        inter = simulate(config.interaction, alpha, seed=int(rng.integers(0, 2**31)))
        guidance = encode_guidance(inter, *alpha.shape)
        xs.append(torch.from_numpy(stack_input(image, guidance)))
        masks.append(torch.from_numpy(binarize_alpha(alpha).astype(np.float32)))
        alphas.append(torch.from_numpy(alpha.astype(np.float32)))
    return torch.stack(xs), torch.stack(masks), torch.stack(alphas)


def train_main(
    config: TrainConfig,
    root,
    manifest: Manifest,
    model: MattingNetwork,
) -> TrainResult:
    """End-to-end training: augment, simulate guidance, joint loss, Adam with
    warm-up + cosine decay. A non-finite loss aborts and restores the last
    snapshot instead of propagating NaNs into the checkpoint."""
    torch.manual_seed(config.seed)
    sampler = CorpusSampler(Path(root), manifest, AugmentConfig(crop=config.crop))
    opt = torch.optim.Adam(model.parameters(), lr=config.base_lr, betas=(config.beta1, config.beta2))
    n = len(manifest.records)
    steps_per_epoch = max(1, n // config.batch_size) if n >= config.batch_size else 1
    max_iter = config.epochs * steps_per_epoch
    if config.max_steps is not None:
        max_iter = min(max_iter, config.max_steps)
    warmup = min(config.warmup_iters, max_iter)
    trace: list[dict] = []
    step = 0
    aborted = False
    last_good = {k: v.detach().clone() for k, v in model.state_dict().items()}
    model.train()
    for epoch in range(config.epochs):
        order = np.random.default_rng(_derive_seed(config.seed, epoch)).permutation(n)
        for b in range(steps_per_epoch):
            if step >= max_iter:
                break
            idx = order[(b * config.batch_size) % n : (b * config.batch_size) % n + config.batch_size]
            if len(idx) < config.batch_size and n >= config.batch_size:
                idx = order[:config.batch_size]
            batch_records = [manifest.records[i] for i in idx]
            seeds = [_derive_seed(config.seed, epoch, b, int(i)) for i in idx]
            x, mask_gt, alpha_gt = _build_batch(sampler, batch_records, seeds, config)
            lr = lr_warmup_cosine(step, warmup, max_iter, config.base_lr)
            for pg in opt.param_groups:
                pg["lr"] = lr
            out = model(x)
            ce = loss_ce(out.mask_prob, mask_gt)
            l1 = loss_l1(out.alpha, alpha_gt)
            total = ce + config.lambda_l1 * l1
            if not torch.isfinite(total):
                model.load_state_dict(last_good)
                aborted = True
                break
            opt.zero_grad()
            total.backward()
            opt.step()
            trace.append(
                {
                    "step": step,
                    "lr": lr,
                    "loss_ce": float(ce.item()),
                    "loss_l1": float(l1.item()),
                    "loss_final": float(total.item()),
                }
            )
            step += 1
            if config.snapshot_every and step % config.snapshot_every == 0:
                last_good = {k: v.detach().clone() for k, v in model.state_dict().items()}
        if aborted or step >= max_iter:
            break
    return TrainResult(model=model, trace=trace, step=step, aborted=aborted)
