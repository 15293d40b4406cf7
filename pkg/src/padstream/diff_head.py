"""Difference branch: a single 3k-channel stack, no recurrence.

The channel-concatenated RGB differences of the k+1 keyframes go through the
same backbone/fusion/pooling stack (fusing fine-to-coarse by default); each
pyramid level is globally average-pooled and the five vectors feed one linear
classifier.  Inputs are raw differences in [-1, 1] - deliberately not
standardised, the signal lives in the magnitudes.

The first convolution is adapted from an RGB-initialised kernel: the kernel's
mean over its three input channels is replicated across all 3k difference
channels, so each difference channel starts with the same (colour-agnostic)
spatial filter.
"""

from __future__ import annotations

from dataclasses import replace

import torch
import torch.nn.functional as F
from torch import nn

from .backbone import BackboneConfig, FeatureFusion, PyramidBackbone, PyramidEnricher
from .errors import InconsistentShapes, WrongChannelCount
from .metrics import ScorePair


def adapt_first_layer(rgb_kernel: torch.Tensor, k: int) -> torch.Tensor:
    """Replicate the channel-mean of an RGB conv kernel across 3k channels.

    Args:
        rgb_kernel: [F, 3, h, w] weight of a conv over RGB input.
        k: number of difference maps (output has 3k input channels).

    Returns:
        [F, 3k, h, w] tensor; every input-channel slice equals the mean of
        the original three.
    """
    if rgb_kernel.ndim != 4 or rgb_kernel.shape[1] != 3:
        raise WrongChannelCount(
            f"expected an [F,3,h,w] RGB kernel, got {tuple(rgb_kernel.shape)}"
        )
    if k < 1:
        raise WrongChannelCount(f"k must be >= 1, got {k}")
    mean = rgb_kernel.mean(dim=1, keepdim=True)
    return mean.repeat(1, 3 * k, 1, 1)


class DiffModel(nn.Module):
    """Backbone + fusion + pooling + linear classifier over a difference stack."""

    def __init__(
        self,
        backbone_cfg: BackboneConfig,
        fusion_channels: int = 48,
        fusion_direction: str = "fine_to_coarse",
        ppm_enabled: bool = True,
    ):
        super().__init__()
        if backbone_cfg.in_channels % 3 != 0:
            raise WrongChannelCount("diff branch needs a multiple-of-3 input channel count")
        self.k = backbone_cfg.in_channels // 3
        self.backbone = PyramidBackbone(backbone_cfg)
        self.fusion = FeatureFusion(
            list(backbone_cfg.stage_channels), fusion_channels, fusion_direction
        )
        self.enricher = PyramidEnricher(fusion_channels, enabled=ppm_enabled)
        self.classifier = nn.Linear(5 * self.enricher.out_channels, 2)

    def forward(self, diffs: torch.Tensor) -> torch.Tensor:
        """diffs [B, S, S, 3k] -> logits [B, 2]."""
        if diffs.ndim != 4 or diffs.shape[3] != 3 * self.k:
            raise InconsistentShapes(
                f"expected [B,S,S,{3 * self.k}] diff stack, got {tuple(diffs.shape)}"
            )
        x = diffs.permute(0, 3, 1, 2).contiguous().clamp(-1.0, 1.0)
        pyramid = self.enricher(self.fusion(self.backbone(x)))
        pooled = [lvl.mean(dim=(2, 3)) for lvl in pyramid.levels]
        return self.classifier(torch.cat(pooled, dim=1))

    @torch.no_grad()
    def score(self, diffs: torch.Tensor) -> list:
        probs = F.softmax(self.forward(diffs), dim=1)
        return [ScorePair(float(p[0]), float(p[1])) for p in probs]


def build_diff_model(
    backbone_cfg: BackboneConfig,
    k: int,
    seed: int,
    fusion_channels: int = 48,
    fusion_direction: str = "fine_to_coarse",
    ppm_enabled: bool = True,
) -> DiffModel:
    """Build the diff branch from an RGB-initialised backbone.

    A 3-channel backbone is initialised under the given seed, its weights are
    copied into a 3k-channel twin, and the twin's first convolution becomes
    adapt_first_layer of the RGB stem kernel.
    """
    torch.manual_seed(seed)
    rgb_backbone = PyramidBackbone(replace(backbone_cfg, in_channels=3))
    diff_cfg = replace(backbone_cfg, in_channels=3 * k)
    model = DiffModel(
        diff_cfg,
        fusion_channels=fusion_channels,
        fusion_direction=fusion_direction,
        ppm_enabled=ppm_enabled,
    )
    state = rgb_backbone.state_dict()
    adapted = adapt_first_layer(state.pop("stem.weight"), k)
    model.backbone.load_state_dict({"stem.weight": adapted, **state})
    return model
