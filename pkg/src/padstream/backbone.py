"""Lightweight inverted-residual backbone with pyramid feature fusion.

The backbone is a five-stage, stride-32 network of MobileNet-flavoured
inverted-residual blocks (1x1 expand -> 3x3 depthwise -> optional
squeeze-excite -> 1x1 project, SiLU activations).  Each stage halves the
spatial size, giving a five-level feature pyramid.

Two enrichment stages sit on top:

* FeatureFusion - per-level 1x1 lateral projections to a common width, then
  a running sum swept either coarse-to-fine (neighbour upsampled 2x, nearest)
  or fine-to-coarse (neighbour max-pooled 2x);
* PyramidPooling - per level, the map is average-pooled onto 1x1/2x2/3x3/6x6
  grids, each projected to ceil(C/4) channels, upsampled back and concatenated
  with the input, doubling the channel count for C divisible by 4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import (
    BadSpatialSize,
    ConfigError,
    InconsistentShapes,
    WrongChannelCount,
    WrongLevelCount,
)

PYRAMID_LEVELS = 5
EXPANSION = 6  # inverted-residual expansion ratio
FPM_DIRECTIONS = ("coarse_to_fine", "fine_to_coarse")
PPM_BINS = (1, 2, 3, 6)


@dataclass(frozen=True)
class BackboneConfig:
    """Structural knobs for the five-stage backbone."""

    in_channels: int = 3
    stage_channels: tuple = (16, 24, 40, 64, 96)
    blocks_per_stage: tuple = (1, 2, 2, 2, 2)
    use_squeeze_excite: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.in_channels < 1 or self.in_channels % 3 != 0:
            raise ConfigError(
                f"in_channels must be a positive multiple of 3, got {self.in_channels}"
            )
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        for name, tup in (
            ("stage_channels", self.stage_channels),
            ("blocks_per_stage", self.blocks_per_stage),
        ):
            if len(tup) != PYRAMID_LEVELS:
                raise ConfigError(f"{name} must have {PYRAMID_LEVELS} entries, got {len(tup)}")
        if any(c < 4 for c in self.stage_channels):
            raise ConfigError(f"stage_channels entries must be >= 4: {self.stage_channels}")
        if any(b < 1 for b in self.blocks_per_stage):
            raise ConfigError(f"blocks_per_stage entries must be >= 1: {self.blocks_per_stage}")
        object.__setattr__(self, "stage_channels", tuple(int(c) for c in self.stage_channels))
        object.__setattr__(self, "blocks_per_stage", tuple(int(b) for b in self.blocks_per_stage))


@dataclass
class FeaturePyramid:
    """Five feature maps, finest first, spatial size exactly halving per level."""

    levels: list
    stage: str = "raw"  # raw | fused | pooled

    def __post_init__(self):
        if len(self.levels) != PYRAMID_LEVELS:
            raise WrongLevelCount(
                f"expected {PYRAMID_LEVELS} pyramid levels, got {len(self.levels)}"
            )
        batch = self.levels[0].shape[0]
        for i, lvl in enumerate(self.levels):
            if lvl.ndim != 4:
                raise InconsistentShapes(f"level {i} is not a 4-d tensor: {tuple(lvl.shape)}")
            if lvl.shape[0] != batch:
                raise InconsistentShapes("pyramid levels disagree on batch size")
            if i > 0:
                prev = self.levels[i - 1]
                if lvl.shape[2] * 2 != prev.shape[2] or lvl.shape[3] * 2 != prev.shape[3]:
                    raise InconsistentShapes(
                        f"level {i} spatial size {tuple(lvl.shape[2:])} is not half of "
                        f"level {i - 1} {tuple(prev.shape[2:])}"
                    )

    @property
    def channels(self) -> list:
        return [int(lvl.shape[1]) for lvl in self.levels]


class SqueezeExcite(nn.Module):
    """Global-pool channel gating with a 4x bottleneck."""

    def __init__(self, channels: int):
        super().__init__()
        hidden = max(4, channels // 4)
        self.reduce = nn.Conv2d(channels, hidden, 1)
        self.expand = nn.Conv2d(hidden, channels, 1)

    def forward(self, x):
        s = x.mean(dim=(2, 3), keepdim=True)
        s = F.silu(self.reduce(s))
        return x * torch.sigmoid(self.expand(s))


class InvertedResidual(nn.Module):
    def __init__(self, c_in: int, c_out: int, stride: int, use_se: bool):
        super().__init__()
        mid = c_in * EXPANSION
        self.use_residual = stride == 1 and c_in == c_out
        self.expand = nn.Conv2d(c_in, mid, 1, bias=False)
        self.expand_bn = nn.BatchNorm2d(mid)
        self.depthwise = nn.Conv2d(mid, mid, 3, stride=stride, padding=1, groups=mid, bias=False)
        self.depthwise_bn = nn.BatchNorm2d(mid)
        self.se = SqueezeExcite(mid) if use_se else None
        self.project = nn.Conv2d(mid, c_out, 1, bias=False)
        self.project_bn = nn.BatchNorm2d(c_out)

    def forward(self, x):
        y = F.silu(self.expand_bn(self.expand(x)))
        y = F.silu(self.depthwise_bn(self.depthwise(y)))
        if self.se is not None:
            y = self.se(y)
        y = self.project_bn(self.project(y))
        if self.use_residual:
            y = y + x
        return y


class PyramidBackbone(nn.Module):
    """Five stride-2 stages; forward returns the per-stage feature pyramid.

    Squeeze-excite, when enabled, is applied in the last three stages only
    (where channel counts make the gating worthwhile).
    """

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.cfg = cfg
        ch = cfg.stage_channels
        self.stem = nn.Conv2d(cfg.in_channels, ch[0], 3, stride=2, padding=1, bias=False)
        self.stem_bn = nn.BatchNorm2d(ch[0])
        stages = []
        for idx in range(PYRAMID_LEVELS):
            use_se = cfg.use_squeeze_excite and idx >= 2
            blocks = []
            c_in = ch[idx - 1] if idx > 0 else ch[0]
            n_blocks = cfg.blocks_per_stage[idx]
            if idx == 0:
                n_blocks -= 1  # the stem is the first unit of stage 0
            for b in range(n_blocks):
                stride = 2 if (idx > 0 and b == 0) else 1
                blocks.append(InvertedResidual(c_in, ch[idx], stride, use_se))
                c_in = ch[idx]
            stages.append(nn.Sequential(*blocks))
        self.stages = nn.ModuleList(stages)

    def forward(self, x: torch.Tensor) -> FeaturePyramid:
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise WrongChannelCount(
                f"expected [B,{self.cfg.in_channels},S,S] input, got {tuple(x.shape)}"
            )
        size = x.shape[2]
        if x.shape[3] != size or size % 32 != 0 or size < 32:
            raise BadSpatialSize(
                f"input spatial size must be square and divisible by 32, got {tuple(x.shape[2:])}"
            )
        y = F.silu(self.stem_bn(self.stem(x)))
        levels = []
        for stage in self.stages:
            y = stage(y)
            levels.append(y)
        return FeaturePyramid(levels=levels, stage="raw")


class FeatureFusion(nn.Module):
    """Directional cross-scale fusion over a five-level pyramid.

    Lateral 1x1 convs project every level to ``out_channels``; the sweep then
    adds each level's neighbour (resampled 2x) into a running sum:

    * ``coarse_to_fine``: start at the coarsest level, nearest-upsample the
      running map by 2 and add the next finer lateral;
    * ``fine_to_coarse``: start at the finest, 2x2 max-pool the running map
      and add the next coarser lateral.
    """

    def __init__(self, in_channels: list, out_channels: int = 48, direction: str = "coarse_to_fine"):
        super().__init__()
        if direction not in FPM_DIRECTIONS:
            raise ConfigError(f"direction must be one of {FPM_DIRECTIONS}, got {direction!r}")
        if len(in_channels) != PYRAMID_LEVELS:
            raise WrongLevelCount(f"need {PYRAMID_LEVELS} channel counts, got {len(in_channels)}")
        if out_channels < 1:
            raise ConfigError(f"out_channels must be positive, got {out_channels}")
        self.direction = direction
        self.out_channels = int(out_channels)
        self.laterals = nn.ModuleList(
            [nn.Conv2d(int(c), self.out_channels, 1) for c in in_channels]
        )

    def forward(self, pyramid: FeaturePyramid) -> FeaturePyramid:
        if len(pyramid.levels) != PYRAMID_LEVELS:
            raise WrongLevelCount(f"expected {PYRAMID_LEVELS} levels")
        for i, (lvl, lat) in enumerate(zip(pyramid.levels, self.laterals)):
            if lvl.shape[1] != lat.in_channels:
                raise WrongChannelCount(
                    f"level {i} has {lvl.shape[1]} channels, lateral expects {lat.in_channels}"
                )
        laterals = [lat(lvl) for lat, lvl in zip(self.laterals, pyramid.levels)]
        out = [None] * PYRAMID_LEVELS
        if self.direction == "coarse_to_fine":
            running = laterals[-1]
            out[-1] = running
            for i in range(PYRAMID_LEVELS - 2, -1, -1):
                running = laterals[i] + F.interpolate(running, scale_factor=2, mode="nearest")
                out[i] = running
        else:
            running = laterals[0]
            out[0] = running
            for i in range(1, PYRAMID_LEVELS):
                running = laterals[i] + F.max_pool2d(running, kernel_size=2, stride=2)
                out[i] = running
        return FeaturePyramid(levels=out, stage="fused")


class PyramidPooling(nn.Module):
    """Multi-grid context pooling for one feature map.

    Each bin branch adaptive-average-pools to bin x bin, projects to
    ceil(C/4) channels with a 1x1 conv + SiLU, nearest-upsamples back and is
    concatenated with the input: C -> C + len(bins) * ceil(C/4).
    """

    def __init__(self, channels: int, bins: tuple = PPM_BINS):
        super().__init__()
        if channels < 1:
            raise ConfigError(f"channels must be positive, got {channels}")
        if not bins or any(b < 1 for b in bins):
            raise ConfigError(f"bins must be positive integers, got {bins}")
        self.channels = int(channels)
        self.bins = tuple(int(b) for b in bins)
        branch_ch = math.ceil(channels / 4)
        self.branch_channels = branch_ch
        self.convs = nn.ModuleList([nn.Conv2d(channels, branch_ch, 1) for _ in self.bins])

    @property
    def out_channels(self) -> int:
        return self.channels + len(self.bins) * self.branch_channels

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise WrongChannelCount(
                f"expected [B,{self.channels},H,W] input, got {tuple(x.shape)}"
            )
        h, w = int(x.shape[2]), int(x.shape[3])
        parts = [x]
        for b, conv in zip(self.bins, self.convs):
            pooled = F.adaptive_avg_pool2d(x, (b, b))
            proj = F.silu(conv(pooled))
            parts.append(F.interpolate(proj, size=(h, w), mode="nearest"))
        return torch.cat(parts, dim=1)


class PyramidEnricher(nn.Module):
    """Applies a PyramidPooling module to every level of a fused pyramid."""

    def __init__(self, channels: int, bins: tuple = PPM_BINS, enabled: bool = True):
        super().__init__()
        self.enabled = enabled
        self.channels = int(channels)
        if enabled:
            self.poolers = nn.ModuleList(
                [PyramidPooling(channels, bins) for _ in range(PYRAMID_LEVELS)]
            )
        else:
            self.poolers = nn.ModuleList()

    @property
    def out_channels(self) -> int:
        if not self.enabled:
            return self.channels
        return self.poolers[0].out_channels

    def forward(self, pyramid: FeaturePyramid) -> FeaturePyramid:
        if not self.enabled:
            return FeaturePyramid(levels=list(pyramid.levels), stage="pooled")
        if len(pyramid.levels) != PYRAMID_LEVELS:
            raise WrongLevelCount(f"expected {PYRAMID_LEVELS} levels")
        return FeaturePyramid(
            levels=[p(lvl) for p, lvl in zip(self.poolers, pyramid.levels)],
            stage="pooled",
        )


def init_backbone(cfg: BackboneConfig) -> PyramidBackbone:
    """Build a backbone with parameters seeded from ``cfg.seed``.

    Two calls with the same config produce bitwise-identical parameters.
    """
    torch.manual_seed(cfg.seed)
    return PyramidBackbone(cfg)


def count_parameters(module: nn.Module) -> int:
    """Number of trainable parameters in a module."""
    return sum(p.numel() for p in module.parameters() if p.requires_grad)
