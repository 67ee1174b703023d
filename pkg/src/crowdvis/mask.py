"""Visibility mask volume and the circular 2D transfer function.

Every group k maps to a 2D vector on the rim of a circle inscribed in the unit
square; the background (and hidden instances) map to the center. Interpolating
between a group's rim point and the center never crosses another group's
chord, so post-classification of the trilinearly sampled mask stays free of
foreign-color fringes at instance boundaries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grouping import RGBA, GroupAssignment
from .voldata import GridDims, SegmentationVolume, sample_trilinear

# Mask components are stored as 8-bit normalized integers, so a stored
# background vector lands up to ~0.003 away from the exact center. Alpha is
# forced to zero inside this radius so quantized background stays fully
# transparent instead of accumulating haze along a ray.
CENTER_DEAD_ZONE = 0.004


def mask_value(k: int, n_groups: int) -> tuple[float, float]:
    """Rim position of group k among n_groups; k = 0 is the center (background)."""
    if k < 0:
        raise ValueError(f"group index must be >= 0, got {k}")
    if k == 0:
        return (0.5, 0.5)
    if n_groups < 1:
        raise ValueError(f"need n_groups >= 1 for k > 0, got {n_groups}")
    if k > n_groups:
        raise ValueError(f"group index {k} exceeds group count {n_groups}")
    phi = 2.0 * math.pi * (k - 1) / n_groups
    return (0.5 + 0.5 * math.cos(phi), 0.5 + 0.5 * math.sin(phi))


def quantize_mask_value(value: tuple[float, float]) -> tuple[int, int]:
    """Nearest 1/255 step per component, as stored in the mask volume."""
    return (int(np.round(value[0] * 255.0)), int(np.round(value[1] * 255.0)))


@dataclass
class VisibilityMask:
    """Per-voxel quantized 2D mask vectors."""

    dims: GridDims
    values: np.ndarray  # uint8, shape (*dims.shape, 2)

    def __post_init__(self):
        if self.values.shape != (*self.dims.shape, 2):
            raise ValueError(f"mask shape {self.values.shape} != {(*self.dims.shape, 2)}")

    def dequantized(self) -> np.ndarray:
        return self.values.astype(np.float32) / 255.0

    def to_bytes(self) -> bytes:
        """Headerless payload: x-fastest voxel order, 2 bytes per voxel."""
        return np.ascontiguousarray(self.values.transpose(2, 1, 0, 3)).tobytes()


def build_visibility_mask(
    seg: SegmentationVolume,
    assignment: GroupAssignment,
    visible: dict[int, bool],
    n_groups: int,
) -> VisibilityMask:
    """Assign every voxel its instance's group rim vector; hidden instances and
    background voxels take the center vector."""
    max_id = seg.max_id
    center = quantize_mask_value(mask_value(0, max(n_groups, 1)))
    lut = np.empty((max_id + 1, 2), dtype=np.uint8)
    lut[:] = center
    for iid, k in assignment.group_of.items():
        if iid > max_id:
            continue
        if k > 0 and visible.get(iid, False):
            lut[iid] = quantize_mask_value(mask_value(k, n_groups))
    return VisibilityMask(dims=seg.dims, values=lut[seg.ids])


@dataclass
class TransferFunction2D:
    """Circular 2D transfer function over mask space.

    ``lookup`` is the exact analytic evaluation used by the renderer and tests;
    ``rasterize`` bakes the same field into an R x R RGBA texture for export.
    ``group_colors[k]`` holds group k's RGBA; index 0 is the transparent
    background.
    """

    n_groups: int
    group_colors: np.ndarray  # float64, shape (n_groups + 1, 4)
    resolution: int = 256
    dead_zone: float = CENTER_DEAD_ZONE

    def __post_init__(self):
        if self.group_colors.shape != (self.n_groups + 1, 4):
            raise ValueError(
                f"group_colors shape {self.group_colors.shape} != {(self.n_groups + 1, 4)}"
            )
        self._texture: np.ndarray | None = None

    def lookup(self, uv) -> np.ndarray:
        """RGBA at a mask vector: sector color, alpha ramped radially from the center."""
        dx = float(uv[0]) - 0.5
        dy = float(uv[1]) - 0.5
        r = math.hypot(dx, dy)
        if self.n_groups == 0 or r < self.dead_zone:
            return np.zeros(4)
        theta = math.atan2(dy, dx)
        k = 1 + int(round(theta * self.n_groups / (2.0 * math.pi))) % self.n_groups
        rgba = self.group_colors[k].copy()
        rgba[3] *= min(2.0 * r, 1.0)
        return rgba

    def rasterize(self) -> np.ndarray:
        """Texture indexed [iu, iv, rgba], texel centers at ((i + 0.5) / R)."""
        if self._texture is None:
            res = self.resolution
            tex = np.zeros((res, res, 4), dtype=np.float32)
            for iu in range(res):
                u = (iu + 0.5) / res
                for iv in range(res):
                    tex[iu, iv] = self.lookup((u, (iv + 0.5) / res))
            self._texture = tex
        return self._texture

    def lookup_texture(self, uv) -> np.ndarray:
        tex = self.rasterize()
        iu = min(max(int(uv[0] * self.resolution), 0), self.resolution - 1)
        iv = min(max(int(uv[1] * self.resolution), 0), self.resolution - 1)
        return tex[iu, iv].astype(np.float64)

    def to_image_bytes(self) -> bytes:
        """The rasterized texture as PNG (u axis right, v axis up)."""
        import io

        from PIL import Image

        tex = self.rasterize()
        img8 = np.round(np.clip(tex, 0.0, 1.0) * 255.0).astype(np.uint8)
        # Image rows run top to bottom; flip v so it points up.
        img = Image.fromarray(img8.transpose(1, 0, 2)[::-1], "RGBA")
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()


def build_transfer_function(
    group_colors: dict[int, RGBA] | list[RGBA],
    n_groups: int,
    resolution: int = 256,
) -> TransferFunction2D:
    """Arrange the group colors around the transparent center."""
    if n_groups < 0:
        raise ValueError("n_groups must be >= 0")
    if resolution < 64:
        raise ValueError(f"resolution must be >= 64, got {resolution}")
    colors = np.zeros((n_groups + 1, 4), dtype=np.float64)
    if isinstance(group_colors, dict):
        items = group_colors.items()
    else:
        items = enumerate(group_colors, start=1)
    for k, rgba in items:
        if not 1 <= k <= n_groups:
            raise ValueError(f"group index {k} outside 1..{n_groups}")
        colors[k] = rgba
    return TransferFunction2D(n_groups=n_groups, group_colors=colors, resolution=resolution)


def export_mask(mask: VisibilityMask, out_dir, name: str = "mask"):
    """Write the mask as headerless binary (2 bytes/voxel, x-fastest) plus a
    JSON descriptor; returns the descriptor path."""
    import json
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = f"{name}.bin"
    (out_dir / payload).write_bytes(mask.to_bytes())
    descriptor = out_dir / f"{name}.json"
    descriptor.write_text(
        json.dumps(
            {
                "dims": list(mask.dims.shape),
                "spacing": list(mask.dims.spacing),
                "mask": {
                    "file": payload,
                    "dtype": "u8",
                    "components": 2,
                    "endianness": "little",
                },
            },
            indent=2,
        )
    )
    return descriptor


def sample_mask_classified(
    mask: VisibilityMask, tf: TransferFunction2D, p
) -> np.ndarray:
    """Trilinear mask interpolation followed by the transfer-function lookup.

    Positions outside the volume box are transparent.
    """
    wx, wy, wz = mask.dims.world_size
    if not (0.0 <= p[0] <= wx and 0.0 <= p[1] <= wy and 0.0 <= p[2] <= wz):
        return np.zeros(4)
    uv = sample_trilinear(mask.dequantized().astype(np.float64), mask.dims, p)
    return tf.lookup(uv)
