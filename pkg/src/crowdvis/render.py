"""Headless emission-absorption raycaster with mask/raw blending and ID pass.

Rays march the volume box front to back at a fixed half-voxel step. Each
sample classifies the visibility mask and the raw volume through their
transfer functions and blends them:

    C_final    = (1 - w_color)    * C_mask     + w_color    * C_raw
    A_transfer = (1 - w_transfer) * A_mask     + w_transfer * A_mask * A_raw
    A_final    = (1 - w_alpha)    * A_transfer + w_alpha    * A_raw

The ID buffer records, per pixel, the first sample whose blended opacity
reaches ``eps_id`` and whose nearest voxel belongs to a sparsification-visible
instance.
"""
from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _raymarch
from .grouping import GroupAssignment
from .mask import TransferFunction2D, VisibilityMask
from .voldata import GradientField, GridDims, InstanceTable, RawVolume, SegmentationVolume


@dataclass(frozen=True)
class Camera:
    eye: tuple[float, float, float]
    target: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 0.0, 1.0)
    fov_y_deg: float = 45.0
    width: int = 512
    height: int = 512

    def __post_init__(self):
        if tuple(self.eye) == tuple(self.target):
            raise ValueError("camera eye must differ from target")
        if not 0.0 < self.fov_y_deg < 180.0:
            raise ValueError(f"vertical FOV must be in (0, 180), got {self.fov_y_deg}")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float, float]:
        eye = np.asarray(self.eye, dtype=np.float64)
        fwd = np.asarray(self.target, dtype=np.float64) - eye
        fwd /= np.linalg.norm(fwd)
        up_hint = np.asarray(self.up, dtype=np.float64)
        right = np.cross(fwd, up_hint)
        norm = np.linalg.norm(right)
        if norm < 1e-12:
            raise ValueError("camera up vector is parallel to the view direction")
        right /= norm
        up = np.cross(right, fwd)
        half_h = math.tan(math.radians(self.fov_y_deg) / 2.0)
        half_w = half_h * self.width / self.height
        return eye, right, up, fwd, half_w, half_h

    def content_hash(self) -> str:
        payload = repr((self.eye, self.target, self.up, self.fov_y_deg, self.width, self.height))
        return hashlib.sha1(payload.encode()).hexdigest()[:12]

    def to_json(self) -> dict:
        return {
            "eye": list(self.eye),
            "target": list(self.target),
            "up": list(self.up),
            "fovY": self.fov_y_deg,
            "width": self.width,
            "height": self.height,
        }


def fit_camera(dims: GridDims, width: int = 512, height: int = 512, fov_y_deg: float = 45.0) -> Camera:
    """Frame the whole volume from a diagonal-ish viewpoint."""
    center = np.asarray(dims.world_center)
    radius = 0.5 * dims.bounding_diameter()
    direction = np.array([0.8, -1.0, 0.55])
    direction /= np.linalg.norm(direction)
    distance = radius / math.sin(math.radians(fov_y_deg) / 2.0) * 1.05
    eye = center + direction * distance
    return Camera(
        eye=tuple(eye), target=tuple(center), up=(0.0, 0.0, 1.0),
        fov_y_deg=fov_y_deg, width=width, height=height,
    )


@dataclass(frozen=True)
class BlendWeights:
    w_color: float = 0.0
    w_transfer: float = 0.0
    w_alpha: float = 0.0

    def __post_init__(self):
        for name in ("w_color", "w_transfer", "w_alpha"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    def to_json(self) -> dict:
        return {"wColor": self.w_color, "wTransfer": self.w_transfer, "wAlpha": self.w_alpha}


class RawTransferFunction:
    """Piecewise-linear scalar -> RGBA map covering [0, 1]."""

    def __init__(self, points: list[tuple[float, tuple[float, float, float, float]]]):
        if len(points) < 2:
            raise ValueError("raw transfer function needs at least two control points")
        xs = [float(x) for x, _ in points]
        if xs[0] != 0.0 or xs[-1] != 1.0:
            raise ValueError("control points must start at 0.0 and end at 1.0")
        if any(b < a for a, b in zip(xs, xs[1:])):
            raise ValueError("control points must be ascending in x")
        self.points = [(float(x), tuple(float(c) for c in rgba)) for x, rgba in points]
        for _, rgba in self.points:
            if len(rgba) != 4 or any(not 0.0 <= c <= 1.0 for c in rgba):
                raise ValueError(f"RGBA components must lie in [0, 1], got {rgba}")

    @classmethod
    def default_grayscale(cls, max_alpha: float = 0.4) -> "RawTransferFunction":
        return cls([(0.0, (0.0, 0.0, 0.0, 0.0)), (1.0, (1.0, 1.0, 1.0, max_alpha))])

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        xs = np.array([x for x, _ in self.points], dtype=np.float64)
        rgba = np.array([c for _, c in self.points], dtype=np.float64)
        return xs, rgba

    def sample(self, value: float) -> np.ndarray:
        xs, rgba = self.as_arrays()
        v = min(1.0, max(0.0, float(value)))
        return np.array([np.interp(v, xs, rgba[:, c]) for c in range(4)])

    def to_json(self) -> list:
        return [{"x": x, "rgba": list(c)} for x, c in self.points]

    @classmethod
    def from_json(cls, doc: list) -> "RawTransferFunction":
        return cls([(p["x"], tuple(p["rgba"])) for p in doc])


def classify_sample(c_mask, a_mask: float, c_raw, a_raw: float, weights: BlendWeights):
    """Reference blend; returns (C_final, A_transfer, A_final)."""
    c_mask = np.asarray(c_mask, dtype=np.float64)
    c_raw = np.asarray(c_raw, dtype=np.float64)
    c_final = (1.0 - weights.w_color) * c_mask + weights.w_color * c_raw
    a_transfer = (1.0 - weights.w_transfer) * a_mask + weights.w_transfer * a_mask * a_raw
    a_final = (1.0 - weights.w_alpha) * a_transfer + weights.w_alpha * a_raw
    return c_final, a_transfer, a_final


@dataclass(frozen=True)
class RenderOptions:
    step_voxels: float = 0.5  # step = step_voxels * min(spacing)
    background: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 1.0)
    eps_id: float = 0.05
    early_termination: float = 0.99
    shading: bool = False
    shading_ambient: float = 0.3
    raw_only: bool = False


@dataclass
class RenderScene:
    """Immutable snapshot of everything a frame needs."""

    dims: GridDims
    raw_values: np.ndarray  # float32 (nx, ny, nz)
    mask_values: np.ndarray  # uint8 (nx, ny, nz, 2)
    seg_ids: np.ndarray  # int32
    visible_lut: np.ndarray  # uint8 (max_id + 1)
    group_lut: np.ndarray  # int32 (max_id + 1)
    tf_colors: np.ndarray  # float64 (n_groups + 1, 4)
    n_groups: int
    dead_zone: float
    raw_tf: RawTransferFunction
    weights: BlendWeights
    epoch: int = 0
    gradients: np.ndarray | None = None  # float32 (nx, ny, nz, 3)


def make_scene(
    raw: RawVolume,
    seg: SegmentationVolume,
    table: InstanceTable,
    assignment: GroupAssignment,
    mask: VisibilityMask,
    tf: TransferFunction2D,
    raw_tf: RawTransferFunction,
    weights: BlendWeights,
    epoch: int = 0,
    gradients: GradientField | None = None,
) -> RenderScene:
    max_id = max(seg.max_id, table.max_id())
    return RenderScene(
        dims=raw.dims,
        raw_values=np.ascontiguousarray(raw.values, dtype=np.float32),
        mask_values=np.ascontiguousarray(mask.values),
        seg_ids=np.ascontiguousarray(seg.ids),
        visible_lut=table.visible_lut(max_id),
        group_lut=assignment.lut(max_id),
        tf_colors=tf.group_colors,
        n_groups=tf.n_groups,
        dead_zone=tf.dead_zone,
        raw_tf=raw_tf,
        weights=weights,
        epoch=epoch,
        gradients=gradients.grad if gradients is not None else None,
    )


@dataclass
class FrameSet:
    """Composited color image plus the per-pixel nearest-visible-instance IDs."""

    color: np.ndarray  # uint8 (H, W, 4)
    ids: np.ndarray  # int32 (H, W)
    groups: np.ndarray  # int32 (H, W)
    epoch: int
    camera_hash: str


@dataclass
class IdFrame:
    ids: np.ndarray
    groups: np.ndarray
    epoch: int
    camera_hash: str


def _run_kernel(scene: RenderScene, camera: Camera, options: RenderOptions, id_only: bool):
    eye, right, up, fwd, half_w, half_h = camera.basis()
    sx, sy, sz = scene.dims.spacing
    step = options.step_voxels * min(scene.dims.spacing)
    out_color = np.zeros((camera.height, camera.width, 4), dtype=np.float32)
    out_id = np.zeros((camera.height, camera.width), dtype=np.int32)
    out_group = np.zeros((camera.height, camera.width), dtype=np.int32)
    if options.shading and scene.gradients is None and not id_only:
        raise ValueError("shading requires a gradient field on the scene")
    grads = (
        np.ascontiguousarray(scene.gradients, dtype=np.float32)
        if scene.gradients is not None
        else np.zeros((1, 1, 1, 3), dtype=np.float32)
    )
    tf_xs, tf_rgba = scene.raw_tf.as_arrays()
    _raymarch.march(
        scene.raw_values,
        scene.mask_values,
        scene.seg_ids,
        scene.visible_lut,
        scene.group_lut,
        scene.tf_colors,
        scene.n_groups,
        scene.dead_zone,
        tf_xs,
        tf_rgba,
        scene.weights.w_color,
        scene.weights.w_transfer,
        scene.weights.w_alpha,
        eye,
        right,
        up,
        fwd,
        half_w,
        half_h,
        sx,
        sy,
        sz,
        step,
        np.asarray(options.background, dtype=np.float64),
        options.eps_id,
        options.early_termination,
        grads,
        options.shading and not id_only,
        options.shading_ambient,
        options.raw_only,
        id_only,
        out_color,
        out_id,
        out_group,
    )
    return out_color, out_id, out_group


def render_frame(
    scene: RenderScene, camera: Camera, options: RenderOptions = RenderOptions()
) -> FrameSet:
    out_color, out_id, out_group = _run_kernel(scene, camera, options, id_only=False)
    color8 = np.round(np.clip(out_color, 0.0, 1.0) * 255.0).astype(np.uint8)
    return FrameSet(
        color=color8,
        ids=out_id,
        groups=out_group,
        epoch=scene.epoch,
        camera_hash=camera.content_hash(),
    )


def render_id_only(
    scene: RenderScene, camera: Camera, options: RenderOptions = RenderOptions()
) -> IdFrame:
    """Same ID buffer as :func:`render_frame` without the color work."""
    _, out_id, out_group = _run_kernel(scene, camera, options, id_only=True)
    return IdFrame(
        ids=out_id, groups=out_group, epoch=scene.epoch, camera_hash=camera.content_hash()
    )


def frame_to_png_bytes(frame: FrameSet) -> bytes:
    from PIL import Image

    img = Image.fromarray(frame.color, "RGBA")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def write_png(frame: FrameSet, path: str | Path) -> None:
    Path(path).write_bytes(frame_to_png_bytes(frame))


def write_id_buffer(ids: np.ndarray, path: str | Path) -> None:
    """Headerless little-endian int32 grid, row-major."""
    Path(path).write_bytes(np.ascontiguousarray(ids.astype("<i4")).tobytes())
