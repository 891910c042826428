"""Dual-decoder matting network.

A shared residual encoder embeds the RGB image stacked with guidance
channels; a U-Net style segmentation decoder predicts the foreground mask and
a parallel matting decoder, strengthened with multi-scale fusion blocks,
feeds a two-layer transparency head that maps (mask, low-level features) to
the alpha matte.

Blocks are norm-free convolutions with GELU; initialization stabilizes each
convolution's output variance on a probe batch. Keeping feature scale out of
normalization layers makes the forward pass batch-independent, smooth for
finite-difference gradient verification, and lets encoder pretraining shrink
feature noise in a way that is visible at the output heads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .imaging import ShapeError
from .interactions import InteractionKind, channels_for

CHECKPOINT_FORMAT_VERSION = 1

FUSION_POOL_SIZES = (1, 3, 5)
FUSION_MIN_SPATIAL = 5


@dataclass
class ModelConfig:
    guidance_kind: str = "bbox"
    stage_widths: tuple[int, ...] = (16, 32, 64, 128)
    blocks_per_stage: int = 1

    def __post_init__(self):
        self.guidance_kind = InteractionKind(self.guidance_kind).value
        self.stage_widths = tuple(int(w) for w in self.stage_widths)
        if not self.stage_widths:
            raise ValueError("stage_widths must be nonempty")
        if any(b >= a for a, b in zip(self.stage_widths[1:], self.stage_widths)):
            raise ValueError("stage_widths must be strictly increasing")

    @property
    def input_channels(self) -> int:
        return 3 + channels_for(self.guidance_kind)

    @property
    def num_stages(self) -> int:
        return len(self.stage_widths)

    @property
    def downsample_factor(self) -> int:
        return 2**self.num_stages

    @classmethod
    def resnet34_profile(cls, guidance_kind: str = "bbox") -> "ModelConfig":
        """Full-scale profile mirroring a 34-layer residual encoder."""
        return cls(
            guidance_kind=guidance_kind,
            stage_widths=(64, 128, 256, 512),
            blocks_per_stage=3,
        )

    def to_dict(self) -> dict:
        return {
            "guidance_kind": self.guidance_kind,
            "stage_widths": list(self.stage_widths),
            "blocks_per_stage": self.blocks_per_stage,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(
            guidance_kind=data["guidance_kind"],
            stage_widths=tuple(data["stage_widths"]),
            blocks_per_stage=int(data["blocks_per_stage"]),
        )


class ModelOutput(NamedTuple):
    mask_prob: torch.Tensor  # (B, H, W) in (0, 1)
    alpha: torch.Tensor      # (B, H, W) in [0, 1]


def conv_block(in_ch: int, out_ch: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1),
        nn.GELU(),
    )


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.act = nn.GELU()

    def forward(self, x):
        y = self.act(self.conv1(x))
        y = self.conv2(y)
        return self.act(x + y)


class MultiScaleFusion(nn.Module):
    """Per-pixel softmax-weighted blend of the input with its average-pooled
    copies (pool kernel = stride = 1, 3, 5), each branch scored by a 1x1
    convolution and resampled back to the input size.

    The output is a per-pixel convex combination of the four branch values,
    so a constant field is a fixed point.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.score = nn.ModuleList(
            nn.Conv2d(channels, 1, 1) for _ in range(len(FUSION_POOL_SIZES) + 1)
        )

    def forward(self, x):
        h, w = x.shape[-2:]
        if h < FUSION_MIN_SPATIAL or w < FUSION_MIN_SPATIAL:
            raise ShapeError(
                f"multi-scale fusion needs spatial size >= {FUSION_MIN_SPATIAL}, got {h}x{w}"
            )
        branches = [x]
        for k in FUSION_POOL_SIZES:
            branches.append(F.avg_pool2d(x, kernel_size=k, stride=k))
        feats, scores = [], []
        for branch, score_conv in zip(branches, self.score):
            s = score_conv(branch)
            if branch.shape[-2:] != (h, w):
                branch = F.interpolate(branch, size=(h, w), mode="bilinear", align_corners=True)
                s = F.interpolate(s, size=(h, w), mode="bilinear", align_corners=True)
            feats.append(branch)
            scores.append(s)
        weights = torch.softmax(torch.cat(scores, dim=1), dim=1)
        out = sum(w.unsqueeze(1) * f for w, f in zip(weights.unbind(dim=1), feats))
        return out

    def branch_features(self, x):
        """Upsampled branch tensors and their per-pixel weights (no blend)."""
        h, w = x.shape[-2:]
        branches = [x]
        for k in FUSION_POOL_SIZES:
            branches.append(F.avg_pool2d(x, kernel_size=k, stride=k))
        feats, scores = [], []
        for branch, score_conv in zip(branches, self.score):
            s = score_conv(branch)
            if branch.shape[-2:] != (h, w):
                branch = F.interpolate(branch, size=(h, w), mode="bilinear", align_corners=True)
                s = F.interpolate(s, size=(h, w), mode="bilinear", align_corners=True)
            feats.append(branch)
            scores.append(s)
        weights = torch.softmax(torch.cat(scores, dim=1), dim=1)
        return feats, weights


class FusionSite(nn.Module):
    """Applies multi-scale fusion where the feature map is large enough and
    passes smaller maps through unchanged."""

    def __init__(self, channels: int):
        super().__init__()
        self.fusion = MultiScaleFusion(channels)

    def forward(self, x):
        h, w = x.shape[-2:]
        if h < FUSION_MIN_SPATIAL or w < FUSION_MIN_SPATIAL:
            return x
        return self.fusion(x)


class Encoder(nn.Module):
    """Residual stage stack; stage s halves resolution and widens channels."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        stages = []
        in_ch = config.input_channels
        for width in config.stage_widths:
            layers = [conv_block(in_ch, width, stride=2)]
            layers += [ResidualBlock(width) for _ in range(config.blocks_per_stage)]
            stages.append(nn.Sequential(*layers))
            in_ch = width
        self.stages = nn.ModuleList(stages)

    def forward(self, x) -> list[torch.Tensor]:
        if x.shape[1] != self.config.input_channels:
            raise ShapeError(
                f"expected {self.config.input_channels} input channels, got {x.shape[1]}"
            )
        pyramid = []
        for stage in self.stages:
            x = stage(x)
            pyramid.append(x)
        return pyramid


class DecoderTrunk(nn.Module):
    """U-Net style upsampling path with skip concatenation; optionally runs a
    fusion block after every post-skip convolution."""

    def __init__(self, config: ModelConfig, with_fusion: bool):
        super().__init__()
        widths = config.stage_widths
        self.blocks = nn.ModuleList()
        self.fusions = nn.ModuleList()
        for s in range(len(widths) - 2, -1, -1):
            in_ch = widths[s + 1] + widths[s]
            self.blocks.append(conv_block(in_ch, widths[s]))
            self.fusions.append(FusionSite(widths[s]) if with_fusion else nn.Identity())
        self.final = conv_block(widths[0], widths[0])

    def forward(self, pyramid: list[torch.Tensor]) -> torch.Tensor:
        x = pyramid[-1]
        for i, s in enumerate(range(len(pyramid) - 2, -1, -1)):
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            if x.shape[-2:] != pyramid[s].shape[-2:]:
                raise ShapeError("pyramid stage sizes do not chain by factors of 2")
            x = self.blocks[i](torch.cat([x, pyramid[s]], dim=1))
            x = self.fusions[i](x)
        x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
        return self.final(x)


class TransparencyHead(nn.Module):
    """Two convolutions mapping (low-level features || mask) to alpha."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        width = config.stage_widths[0]
        self.conv1 = nn.Conv2d(width + 1, width, 3, padding=1)
        self.act = nn.GELU()
        self.conv2 = nn.Conv2d(width, 1, 3, padding=1)

    def forward(self, features, mask_prob):
        if mask_prob.shape[-2:] != features.shape[-2:]:
            mask_prob = F.interpolate(
                mask_prob.unsqueeze(1), size=features.shape[-2:],
                mode="bilinear", align_corners=True,
            ).squeeze(1)
        x = torch.cat([features, mask_prob.unsqueeze(1)], dim=1)
        return torch.sigmoid(self.conv2(self.act(self.conv1(x)))).squeeze(1)


class MattingNetwork(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = Encoder(config)
        self.trunk_fusion = FusionSite(config.stage_widths[-1])
        self.seg_decoder = DecoderTrunk(config, with_fusion=False)
        self.seg_head = nn.Conv2d(config.stage_widths[0], 1, 1)
        self.mat_decoder = DecoderTrunk(config, with_fusion=True)
        self.tm_head = TransparencyHead(config)

    def encode(self, x) -> list[torch.Tensor]:
        """Raw encoder pyramid (pre-fusion); the top entry is the feature map
        consistency pretraining compares."""
        return self.encoder(x)

    def segment(self, pyramid) -> tuple[torch.Tensor, torch.Tensor]:
        feats = self.seg_decoder(pyramid)
        logits = self.seg_head(feats).squeeze(1)
        return logits, torch.sigmoid(logits)

    def matte(self, pyramid, mask_prob) -> torch.Tensor:
        feats = self.mat_decoder(pyramid)
        return self.tm_head(feats, mask_prob)

    def forward(self, x) -> ModelOutput:
        h, w = x.shape[-2:]
        factor = self.config.downsample_factor
        if h % factor or w % factor:
            raise ShapeError(
                f"input spatial dims must be divisible by {factor}, got {h}x{w}"
            )
        pyramid = self.encode(x)
        pyramid = pyramid[:-1] + [self.trunk_fusion(pyramid[-1])]
        _, mask_prob = self.segment(pyramid)
        alpha = self.matte(pyramid, mask_prob)
        return ModelOutput(mask_prob=mask_prob, alpha=alpha)

    def encoder_parameters(self):
        return self.encoder.parameters()


STABILIZE_TARGET_STD = 1.0


def _stabilize_variance(model: MattingNetwork, gen: torch.Generator) -> None:
    """Rescale each convolution so its output std is 1 on a probe batch.

    Without normalization layers the compounded per-layer attenuation is
    seed-dependent at small widths; rescaling layers in forward order (the
    hook replaces each output with its corrected version, so downstream
    layers see stabilized inputs) pins every activation scale in one pass.
    """
    size = model.config.downsample_factor * 6  # large enough to engage fusion
    channels = model.config.input_channels
    # image-like probe: smooth low-frequency fields in [0, 1] with mild noise,
    # so measured scales match the statistics of real composites
    low = torch.empty(4, channels, size // 8, size // 8)
    low.normal_(generator=gen)
    probe = F.interpolate(low, size=(size, size), mode="bilinear", align_corners=False)
    flat_min = probe.amin(dim=(2, 3), keepdim=True)
    flat_max = probe.amax(dim=(2, 3), keepdim=True)
    probe = (probe - flat_min) / (flat_max - flat_min + 1e-8)
    noise = torch.empty_like(probe)
    noise.normal_(generator=gen)
    probe = (probe + 0.1 * noise).clamp(0.0, 1.0)

    def rescale(module, _inputs, output):
        std = float(output.detach().std())
        if std <= 1e-8:
            return output
        factor = STABILIZE_TARGET_STD / std
        with torch.no_grad():
            module.weight.mul_(factor)
        return output * factor

    hooks = [
        m.register_forward_hook(rescale)
        for m in model.modules()
        if isinstance(m, nn.Conv2d)
    ]
    try:
        with torch.no_grad():
            model(probe)
    finally:
        for hook in hooks:
            hook.remove()


def init_params(config: ModelConfig, seed: int) -> MattingNetwork:
    """Fan-in-scaled uniform conv weights with zero biases, then a
    variance-stabilizing rescale per convolution; deterministic in the seed."""
    model = MattingNetwork(config)
    gen = torch.Generator().manual_seed(seed)
    for module in model.modules():
        if isinstance(module, nn.Conv2d):
            fan_in = module.in_channels * module.kernel_size[0] * module.kernel_size[1]
            bound = math.sqrt(3.0 / fan_in)
            with torch.no_grad():
                module.weight.uniform_(-bound, bound, generator=gen)
                if module.bias is not None:
                    module.bias.zero_()
    _stabilize_variance(model, gen)
    return model


def count_params(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def save_checkpoint(path, model: MattingNetwork, step: int = 0, train_config: dict | None = None) -> None:
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": model.config.to_dict(),
        "state_dict": model.state_dict(),
        "step": int(step),
        "train_config": train_config,
    }
    torch.save(payload, path)


def _load_payload(path) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version: {version}")
    return payload


def load_checkpoint(path) -> tuple[MattingNetwork, int]:
    payload = _load_payload(path)
    config = ModelConfig.from_dict(payload["config"])
    model = MattingNetwork(config)
    model.load_state_dict(payload["state_dict"])
    return model, int(payload["step"])


def load_checkpoint_meta(path) -> dict:
    """Checkpoint metadata (config echo, step, train config) without weights."""
    payload = _load_payload(path)
    return {
        "config": payload["config"],
        "step": int(payload["step"]),
        "train_config": payload.get("train_config"),
    }


# ---------------------------------------------------------------------------
# Numpy-facing inference helpers
# ---------------------------------------------------------------------------

def stack_input(image: np.ndarray, guidance: np.ndarray) -> np.ndarray:
    """(H, W, 3) image + (H, W, C) guidance -> (3+C, H, W) network input."""
    if image.shape[:2] != guidance.shape[:2]:
        raise ShapeError(
            f"image {image.shape[:2]} and guidance {guidance.shape[:2]} disagree"
        )
    stacked = np.concatenate([image, guidance], axis=-1)
    return np.ascontiguousarray(stacked.transpose(2, 0, 1)).astype(np.float32)


def predict(model: MattingNetwork, image: np.ndarray, guidance: np.ndarray):
    """Run the network on one image of arbitrary size.

    Pads (edge mode) up to the nearest multiple of the encoder's downsample
    factor and crops the outputs back. Returns (mask_prob, alpha) float
    arrays shaped like the input image.
    """
    h, w = image.shape[:2]
    factor = model.config.downsample_factor
    pad_h = (factor - h % factor) % factor
    pad_w = (factor - w % factor) % factor
    stacked = stack_input(image, guidance)
    if pad_h or pad_w:
        stacked = np.pad(stacked, ((0, 0), (0, pad_h), (0, pad_w)), mode="edge")
    dtype = next(model.parameters()).dtype
    x = torch.from_numpy(stacked).unsqueeze(0).to(dtype)
    model.eval()
    with torch.no_grad():
        out = model(x)
    mask = out.mask_prob[0, :h, :w].cpu().numpy().astype(np.float64)
    alpha = out.alpha[0, :h, :w].cpu().numpy().astype(np.float64)
    return np.clip(mask, 0.0, 1.0), np.clip(alpha, 0.0, 1.0)
