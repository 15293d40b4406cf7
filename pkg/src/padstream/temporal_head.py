"""Multi-frame branch: per-level recurrent heads over a keyframe sequence.

Each selected frame is pushed through the shared backbone + fusion + pooling
stack; every pyramid level is then globally average-pooled per frame, giving
five [T, D] sequences per clip.  A bidirectional LSTM per level consumes its
sequence, the final forward/backward hidden states of all five levels are
concatenated, and a single linear layer produces (live, spoof) logits.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .backbone import (
    BackboneConfig,
    FeatureFusion,
    FeaturePyramid,
    PyramidBackbone,
    PyramidEnricher,
    PYRAMID_LEVELS,
)
from .errors import InconsistentShapes, WrongLevelCount
from .metrics import ScorePair

INPUT_MEAN = 0.5
INPUT_STD = 0.25


def pool_levels(pyramids) -> list:
    """Globally average-pool a sequence of per-frame pyramids.

    Args:
        pyramids: length-T sequence of FeaturePyramid, all shape-identical.

    Returns:
        PYRAMID_LEVELS tensors of shape [T, C_level].
    """
    pyramids = list(pyramids)
    if not pyramids:
        raise InconsistentShapes("need at least one pyramid to pool")
    for p in pyramids:
        if len(p.levels) != PYRAMID_LEVELS:
            raise WrongLevelCount(f"expected {PYRAMID_LEVELS} levels")
        if p.levels[0].shape[0] != 1:
            raise InconsistentShapes("pool_levels expects single-frame pyramids (batch 1)")
        for lvl, ref in zip(p.levels, pyramids[0].levels):
            if lvl.shape != ref.shape:
                raise InconsistentShapes("pyramids in a sequence must be shape-identical")
    out = []
    for level_idx in range(PYRAMID_LEVELS):
        pooled = [p.levels[level_idx].mean(dim=(2, 3)) for p in pyramids]
        out.append(torch.cat(pooled, dim=0))
    return out


class MultiFrameHead(nn.Module):
    """Five bidirectional LSTMs (one per pyramid level) + a joint classifier."""

    def __init__(self, feature_dim: int, hidden_size: int = 32, dropout: float = 0.2):
        super().__init__()
        self.feature_dim = int(feature_dim)
        self.hidden_size = int(hidden_size)
        self.lstms = nn.ModuleList(
            [
                nn.LSTM(self.feature_dim, self.hidden_size, batch_first=True, bidirectional=True)
                for _ in range(PYRAMID_LEVELS)
            ]
        )
        self.dropout = nn.Dropout(dropout)
        self.classifier = nn.Linear(PYRAMID_LEVELS * 2 * self.hidden_size, 2)

    def forward(self, level_seqs) -> torch.Tensor:
        """level_seqs: PYRAMID_LEVELS tensors [B, T, feature_dim] -> logits [B, 2]."""
        if len(level_seqs) != PYRAMID_LEVELS:
            raise WrongLevelCount(f"expected {PYRAMID_LEVELS} level sequences")
        embeddings = []
        for lstm, seq in zip(self.lstms, level_seqs):
            if seq.ndim != 3 or seq.shape[2] != self.feature_dim:
                raise InconsistentShapes(
                    f"expected [B,T,{self.feature_dim}] sequence, got {tuple(seq.shape)}"
                )
            _, (h_n, _) = lstm(seq)
            # h_n is [2, B, H]: final forward state then final backward state.
            embeddings.append(torch.cat([h_n[0], h_n[1]], dim=1))
        joined = self.dropout(torch.cat(embeddings, dim=1))
        return self.classifier(joined)


class MultiFrameModel(nn.Module):
    """Backbone + fusion + pooling + recurrent head over keyframe sequences."""

    def __init__(
        self,
        backbone_cfg: BackboneConfig,
        fusion_channels: int = 48,
        fusion_direction: str = "coarse_to_fine",
        ppm_enabled: bool = True,
        lstm_hidden: int = 32,
        dropout: float = 0.2,
    ):
        super().__init__()
        self.backbone = PyramidBackbone(backbone_cfg)
        self.fusion = FeatureFusion(
            list(backbone_cfg.stage_channels), fusion_channels, fusion_direction
        )
        self.enricher = PyramidEnricher(fusion_channels, enabled=ppm_enabled)
        self.head = MultiFrameHead(self.enricher.out_channels, lstm_hidden, dropout)

    def features(self, frames: torch.Tensor) -> list:
        """frames [B, T, S, S, 3] -> PYRAMID_LEVELS sequences [B, T, D]."""
        if frames.ndim != 5 or frames.shape[4] != 3:
            raise InconsistentShapes(f"expected [B,T,S,S,3] frames, got {tuple(frames.shape)}")
        b, t = int(frames.shape[0]), int(frames.shape[1])
        x = frames.reshape(b * t, *frames.shape[2:]).permute(0, 3, 1, 2).contiguous()
        x = (x - INPUT_MEAN) / INPUT_STD
        pyramid = self.enricher(self.fusion(self.backbone(x)))
        seqs = []
        for lvl in pyramid.levels:
            pooled = lvl.mean(dim=(2, 3))  # [B*T, D]
            seqs.append(pooled.reshape(b, t, -1))
        return seqs

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(frames))

    @torch.no_grad()
    def score(self, frames: torch.Tensor) -> list:
        """Softmax (live, spoof) pairs for a [B, T, S, S, 3] batch."""
        probs = F.softmax(self.forward(frames), dim=1)
        return [ScorePair(float(p[0]), float(p[1])) for p in probs]


def build_multiframe_model(
    backbone_cfg: BackboneConfig,
    seed: int,
    fusion_channels: int = 48,
    fusion_direction: str = "coarse_to_fine",
    ppm_enabled: bool = True,
    lstm_hidden: int = 32,
    dropout: float = 0.2,
) -> MultiFrameModel:
    """Seeded constructor so identical seeds give identical initial weights."""
    torch.manual_seed(seed)
    return MultiFrameModel(
        backbone_cfg,
        fusion_channels=fusion_channels,
        fusion_direction=fusion_direction,
        ppm_enabled=ppm_enabled,
        lstm_hidden=lstm_hidden,
        dropout=dropout,
    )
