"""In-place relational transformation of ROI features on a feature map.

The forward pass pools a feature row per ROI, adds positional encodings
in spatio-temporal order, runs the rows through a small transformer
encoder, and writes the transformed rows back onto the cells the boxes
cover. Cells outside every footprint are untouched; a video with no
(valid) ROIs bypasses the module entirely and comes back unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .encoder import Encoder
from .errors import ConfigError
from .posenc import ORDERINGS, CoordEncoder, encoding_matrix, order_rois
from .rois import RoiBox, RoiFeatureSet, extract_features, write_back
from .tensor import Tensor, add, concat_axis0, reduce_max, reshape, slice_axis0

INSERTION_POINTS = ("conv3", "conv4", "conv5")


@dataclass(frozen=True)
class TroiConfig:
    insert_at: str = "conv4"
    layers: int = 1
    heads: int = 2
    scene_token: bool = False
    coord_encoding: bool = False
    ordering: str = "left-right"

    def __post_init__(self):
        if self.insert_at not in INSERTION_POINTS:
            raise ConfigError(f"unknown insertion point {self.insert_at!r}; expected one of {INSERTION_POINTS}")
        if self.layers < 1:
            raise ConfigError(f"layer count must be at least 1, got {self.layers}")
        if self.heads < 1:
            raise ConfigError(f"head count must be at least 1, got {self.heads}")
        if self.ordering not in ORDERINGS:
            raise ConfigError(f"unknown ordering {self.ordering!r}; expected one of {ORDERINGS}")

    def variants(self) -> str:
        names = [n for n, on in (("scene", self.scene_token), ("coord", self.coord_encoding)) if on]
        return ",".join(names) if names else "none"


class TroiModule:
    """Extract, relate, and write back ROI features, per video."""

    def __init__(self, channels: int, config: TroiConfig, rng: np.random.Generator):
        if channels % config.heads:
            raise ConfigError(f"channels {channels} must divide evenly into {config.heads} heads")
        self.channels = channels
        self.config = config
        self.encoder = Encoder(channels, config.heads, config.layers, rng)
        self.coord = CoordEncoder(channels, rng) if config.coord_encoding else None

    def forward(
        self,
        x: Tensor,
        rois: Sequence[RoiBox],
        record_attention: list | None = None,
    ) -> Tensor:
        """Map a (T, W, H, C) block to its transformed counterpart."""
        if not rois:
            return x  # bypass: nothing to relate
        fset = extract_features(x, rois)
        n = len(fset)
        if n == 0:
            return x  # every box fell outside the image
        fset.positions = order_rois(fset.boxes, self.config.ordering)

        feats = add(fset.features, Tensor(encoding_matrix(fset.positions, self.channels)))
        if self.coord is not None:
            feats = add(feats, self.coord.encode(fset.boxes))
        if self.config.scene_token:
            feats = self.add_scene_tokens(feats, x, start_pos=n)

        feats = self.encoder.forward(feats, record_attention)
        if feats.data.shape[0] != n:
            feats = slice_axis0(feats, 0, n)  # scene rows are never written back
        return write_back(x, replace_features(fset, feats))

    __call__ = forward

    def add_scene_tokens(self, feats: Tensor, x: Tensor, start_pos: int) -> Tensor:
        """Append one max-pooled whole-frame row per frame, with positional
        indices following all ROI indices in frame order."""
        t, w, h, c = x.data.shape
        rows = []
        for ft in range(t):
            frame = reshape(slice_axis0(x, ft, ft + 1), (w * h, c))
            rows.append(reshape(reduce_max(frame, axis=0), (1, c)))
        tokens = add(
            concat_axis0(rows),
            Tensor(encoding_matrix(list(range(start_pos, start_pos + t)), c)),
        )
        return concat_axis0([feats, tokens])

    def parameters(self):
        out = [(f"encoder.{name}", p) for name, p in self.encoder.parameters()]
        if self.coord is not None:
            out.extend((name, p) for name, p in self.coord.parameters())
        return out


def replace_features(fset: RoiFeatureSet, feats: Tensor) -> RoiFeatureSet:
    return RoiFeatureSet(
        features=feats,
        boxes=fset.boxes,
        footprints=fset.footprints,
        positions=fset.positions,
        dropped=fset.dropped,
    )
