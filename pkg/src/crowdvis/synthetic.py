"""Deterministic synthetic scenes: boxes, spheres, and ellipsoids of various sizes.

Primitives are placed by rejection sampling on their bounding spheres, so
instances never overlap. Raw values fall off smoothly from each primitive's
center, over a low-amplitude seeded noise floor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PlacementError
from .voldata import (
    SCALAR,
    VECTOR3,
    AttributeSchema,
    GridDims,
    InstanceTable,
    RawVolume,
    SegmentationVolume,
)

ATTRIBUTE_PAIRS = [
    ("volume", SCALAR),
    ("centroid", VECTOR3),
    ("orientation", VECTOR3),
    ("elongation", SCALAR),
    ("surfaceVoxels", SCALAR),
]


@dataclass(frozen=True)
class SceneSpec:
    """Counts, sizes and grid of a synthetic scene.

    ``size_range`` bounds the primitive half-size (sphere radius, box half-extent,
    ellipsoid semi-axis) in world units.
    """

    dims: GridDims
    n_boxes: int = 0
    n_spheres: int = 0
    n_ellipsoids: int = 0
    size_range: tuple[float, float] = (2.0, 5.0)
    noise_amplitude: float = 0.05
    max_attempts: int = 2000

    @property
    def n_primitives(self) -> int:
        return self.n_boxes + self.n_spheres + self.n_ellipsoids


@dataclass
class _Primitive:
    kind: str  # "box" | "sphere" | "ellipsoid"
    center: np.ndarray  # world
    half: np.ndarray  # per-axis half sizes (sphere: all equal)
    rot: np.ndarray | None  # 3x3 rotation, ellipsoids only

    @property
    def bound(self) -> float:
        if self.kind == "sphere":
            return float(self.half[0])
        if self.kind == "box":
            return float(np.linalg.norm(self.half))
        return float(self.half.max())


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _place(spec: SceneSpec, rng: np.random.Generator) -> list[_Primitive]:
    world = np.asarray(spec.dims.world_size)
    gap = 0.5 * min(spec.dims.spacing)
    lo, hi = spec.size_range
    kinds = ["box"] * spec.n_boxes + ["sphere"] * spec.n_spheres + ["ellipsoid"] * spec.n_ellipsoids
    placed: list[_Primitive] = []
    centers = np.zeros((len(kinds), 3))
    bounds = np.zeros(len(kinds))
    for kind in kinds:
        if kind == "sphere":
            half = np.full(3, rng.uniform(lo, hi))
            rot = None
        elif kind == "box":
            half = rng.uniform(lo, hi, size=3)
            rot = None
        else:
            half = rng.uniform(lo, hi, size=3)
            rot = _random_rotation(rng)
        prim = _Primitive(kind, np.zeros(3), half, rot)
        margin = prim.bound
        if np.any(world - 2 * margin <= 0):
            raise PlacementError(
                f"primitive of bound {margin:.2f} cannot fit inside volume {tuple(world)}"
            )
        n = len(placed)
        for attempt in range(spec.max_attempts):
            center = rng.uniform(margin, world - margin)
            d = np.linalg.norm(centers[:n] - center, axis=1)
            if np.all(d >= bounds[:n] + margin + gap):
                prim.center = center
                centers[n] = center
                bounds[n] = margin
                placed.append(prim)
                break
        else:
            raise PlacementError(
                f"failed to place primitive {len(placed) + 1} after {spec.max_attempts} attempts"
            )
    return placed


def _voxelize(prim: _Primitive, dims: GridDims, ids: np.ndarray, raw: np.ndarray, iid: int) -> None:
    spacing = np.asarray(dims.spacing)
    lo_idx = np.maximum(np.floor((prim.center - prim.bound) / spacing - 0.5).astype(int), 0)
    hi_idx = np.minimum(
        np.ceil((prim.center + prim.bound) / spacing - 0.5).astype(int) + 1, np.asarray(dims.shape)
    )
    if np.any(lo_idx >= hi_idx):
        lo_idx = np.minimum(lo_idx, np.asarray(dims.shape) - 1)
        hi_idx = lo_idx + 1
    axes = [
        (np.arange(lo_idx[a], hi_idx[a]) + 0.5) * spacing[a] - prim.center[a] for a in range(3)
    ]
    qx, qy, qz = np.meshgrid(*axes, indexing="ij")
    q = np.stack([qx, qy, qz], axis=-1)
    if prim.rot is not None:
        q = q @ prim.rot  # world -> local (rot columns are local axes)
    # rho: normalized distance to the primitive surface along the center ray
    if prim.kind == "sphere":
        rho = np.sqrt((q * q).sum(axis=-1)) / prim.half[0]
    elif prim.kind == "box":
        rho = (np.abs(q) / prim.half).max(axis=-1)
    else:
        rho = np.sqrt(((q / prim.half) ** 2).sum(axis=-1))
    inside = rho <= 1.0
    if not inside.any():
        # Degenerate sub-voxel primitive: claim the voxel nearest the center.
        cv = np.clip(np.round(prim.center / spacing - 0.5).astype(int), 0, np.asarray(dims.shape) - 1)
        ids[cv[0], cv[1], cv[2]] = iid
        raw[cv[0], cv[1], cv[2]] = 1.0
        return
    sl = tuple(slice(lo_idx[a], hi_idx[a]) for a in range(3))
    ids_view = ids[sl]
    raw_view = raw[sl]
    ids_view[inside] = iid
    raw_view[inside] = 0.3 + 0.7 * (1.0 - rho[inside] ** 2)


def _surface_voxel_counts(ids: np.ndarray, n_instances: int) -> np.ndarray:
    """Per-instance count of voxels with a 6-neighbor outside the instance.

    One pass over the whole grid; array-boundary voxels count as surface.
    """
    surf = np.zeros(ids.shape, dtype=bool)
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        differs = ids[tuple(lo)] != ids[tuple(hi)]
        surf[tuple(lo)] |= differs
        surf[tuple(hi)] |= differs
        first = [slice(None)] * 3
        last = [slice(None)] * 3
        first[axis] = 0
        last[axis] = -1
        surf[tuple(first)] = True
        surf[tuple(last)] = True
    labelled = surf & (ids > 0)
    return np.bincount(ids[labelled], minlength=n_instances + 1)


def _principal_axis(points: np.ndarray, spacing: np.ndarray) -> tuple[np.ndarray, float]:
    centered = points - points.mean(axis=0)
    cov = centered.T @ centered / len(points)
    cov += np.diag(spacing**2 / 12.0)  # per-voxel self variance keeps thin shapes finite
    evals, evecs = np.linalg.eigh(cov)
    axis = evecs[:, -1]
    if axis[int(np.argmax(np.abs(axis)))] < 0:  # canonical sign
        axis = -axis
    elongation = float(np.sqrt(evals[-1] / evals[0])) if evals[0] > 0 else 1.0
    return axis, elongation


def generate_synthetic(
    spec: SceneSpec, seed: int
) -> tuple[RawVolume, SegmentationVolume, InstanceTable]:
    """Generate a non-overlapping primitive scene; bit-identical for a fixed seed."""
    rng = np.random.default_rng(seed)
    dims = spec.dims
    ids = np.zeros(dims.shape, dtype=np.int32)
    raw = np.zeros(dims.shape, dtype=np.float32)

    placed = _place(spec, rng) if spec.n_primitives else []
    for i, prim in enumerate(placed, start=1):
        _voxelize(prim, dims, ids, raw, i)

    if spec.noise_amplitude > 0:
        noise = rng.random(dims.shape, dtype=np.float32) * spec.noise_amplitude
        raw = np.clip(raw + noise, 0.0, 1.0)

    spacing = np.asarray(dims.spacing)
    rows: dict[int, dict[str, object]] = {}
    n = len(placed)
    if n:
        surface = _surface_voxel_counts(ids, n)
        # Group labelled voxel indices by instance in one sweep.
        labelled = np.argwhere(ids > 0)
        labels = ids[ids > 0]
        order = np.argsort(labels, kind="stable")
        labelled = labelled[order]
        bounds = np.searchsorted(labels[order], np.arange(1, n + 2))
        for i in range(1, n + 1):
            idx = labelled[bounds[i - 1] : bounds[i]]
            pts = (idx.astype(np.float64) + 0.5) * spacing
            axis, elong = _principal_axis(pts, spacing)
            rows[i] = {
                "volume": float(len(idx) * dims.voxel_volume),
                "centroid": tuple(pts.mean(axis=0)),
                "orientation": tuple(axis),
                "elongation": elong,
                "surfaceVoxels": float(surface[i]),
            }

    schema = AttributeSchema.from_declared(ATTRIBUTE_PAIRS)
    table = InstanceTable(schema, rows)
    return (
        RawVolume(dims=dims, values=np.ascontiguousarray(raw)),
        SegmentationVolume(dims=dims, ids=np.ascontiguousarray(ids)),
        table,
    )
