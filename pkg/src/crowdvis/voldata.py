"""Volume and attribute data model.

Conventions used throughout the engine:

- Volume arrays have shape ``(nx, ny, nz)``, C-contiguous, indexed ``[ix, iy, iz]``.
- On disk, payloads are headerless binary in x-fastest, z-slowest order.
- Voxel ``(i, j, k)`` is centred at ``((i + 0.5) * sx, (j + 0.5) * sy, (k + 0.5) * sz)``
  in world space; the volume occupies the box ``[0, nx*sx] x [0, ny*sy] x [0, nz*sz]``.
- Raw values are normalized to [0, 1] at load time (min-max over the file's values).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetError

SCALAR = "scalar"
VECTOR3 = "vector3"

# Derived scalar suffixes exposed for every vector3 attribute so that range
# predicates stay one-dimensional.
VECTOR_DERIVED_SUFFIXES = (".polar", ".azimuth", ".dot_x", ".dot_y", ".dot_z")


@dataclass(frozen=True)
class GridDims:
    """Voxel counts and per-axis physical spacing of a volume grid."""

    nx: int
    ny: int
    nz: int
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise ValueError(f"voxel counts must be >= 1, got {(self.nx, self.ny, self.nz)}")
        if min(self.spacing) <= 0:
            raise ValueError(f"spacings must be > 0, got {self.spacing}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def voxel_count(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def voxel_volume(self) -> float:
        sx, sy, sz = self.spacing
        return sx * sy * sz

    @property
    def world_size(self) -> tuple[float, float, float]:
        sx, sy, sz = self.spacing
        return (self.nx * sx, self.ny * sy, self.nz * sz)

    @property
    def world_center(self) -> tuple[float, float, float]:
        wx, wy, wz = self.world_size
        return (0.5 * wx, 0.5 * wy, 0.5 * wz)

    def bounding_diameter(self) -> float:
        """Diameter of the bounding sphere of the volume box (its diagonal)."""
        wx, wy, wz = self.world_size
        return math.sqrt(wx * wx + wy * wy + wz * wz)

    def axis_centers(self, axis: int) -> np.ndarray:
        """World coordinates of voxel centers along one axis."""
        n = self.shape[axis]
        return (np.arange(n, dtype=np.float64) + 0.5) * self.spacing[axis]


@dataclass
class RawVolume:
    """Scalar field with values normalized to [0, 1].

    ``value_range`` and ``source_dtype`` record how the payload was normalized so
    that saving can reproduce the original bytes. For float32 sources the original
    values are retained (normalization is lossy in float32).
    """

    dims: GridDims
    values: np.ndarray  # float32, shape dims.shape, in [0, 1]
    value_range: tuple[float, float] = (0.0, 1.0)
    source_dtype: str = "f32"
    source_values: np.ndarray | None = None

    def __post_init__(self):
        if self.values.shape != self.dims.shape:
            raise ValueError(f"value array shape {self.values.shape} != dims {self.dims.shape}")


@dataclass
class SegmentationVolume:
    """Per-voxel instance-ID field; 0 marks background."""

    dims: GridDims
    ids: np.ndarray  # int32, shape dims.shape

    def __post_init__(self):
        if self.ids.shape != self.dims.shape:
            raise ValueError(f"id array shape {self.ids.shape} != dims {self.dims.shape}")

    @property
    def max_id(self) -> int:
        return int(self.ids.max(initial=0))

    def instance_ids(self) -> list[int]:
        present = np.unique(self.ids)
        return [int(i) for i in present if i > 0]


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    kind: str  # SCALAR or VECTOR3
    derived: bool = False


class AttributeSchema:
    """Ordered list of named attributes, each scalar or vector3."""

    def __init__(self, specs: list[AttributeSpec]):
        declared = [s for s in specs if not s.derived]
        if not declared:
            raise DatasetError("schema must declare at least one attribute", field="attributes.schema")
        seen: set[str] = set()
        for s in specs:
            if not s.name:
                raise DatasetError("attribute name must be non-empty", field="attributes.schema")
            if s.kind not in (SCALAR, VECTOR3):
                raise DatasetError(f"unknown attribute kind {s.kind!r}", field=f"attributes.schema.{s.name}")
            if s.name in seen:
                raise DatasetError(f"duplicate attribute name {s.name!r}", field="attributes.schema")
            seen.add(s.name)
        self.specs = list(specs)
        self._by_name = {s.name: s for s in specs}

    @classmethod
    def from_declared(cls, pairs: list[tuple[str, str]]) -> "AttributeSchema":
        """Build a schema from declared (name, kind) pairs, expanding vector3
        attributes into their derived scalars."""
        specs = [AttributeSpec(n, k) for n, k in pairs]
        for name, kind in pairs:
            if kind == VECTOR3:
                for suffix in VECTOR_DERIVED_SUFFIXES:
                    specs.append(AttributeSpec(name + suffix, SCALAR, derived=True))
        return cls(specs)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def kind_of(self, name: str) -> str:
        return self._by_name[name].kind

    def is_scalar(self, name: str) -> bool:
        return name in self._by_name and self._by_name[name].kind == SCALAR

    def declared(self) -> list[AttributeSpec]:
        return [s for s in self.specs if not s.derived]

    def scalar_names(self) -> list[str]:
        return [s.name for s in self.specs if s.kind == SCALAR]


def _derived_scalars(vec: np.ndarray) -> dict[str, float]:
    """Polar angle / azimuth (degrees) and absolute axis alignments of a 3-vector."""
    norm = float(np.linalg.norm(vec))
    if norm <= 0.0:
        return {".polar": 0.0, ".azimuth": 0.0, ".dot_x": 0.0, ".dot_y": 0.0, ".dot_z": 0.0}
    u = vec / norm
    polar = math.degrees(math.acos(max(-1.0, min(1.0, float(u[2])))))
    azimuth = math.degrees(math.atan2(float(u[1]), float(u[0]))) % 360.0
    return {
        ".polar": polar,
        ".azimuth": azimuth,
        ".dot_x": abs(float(u[0])),
        ".dot_y": abs(float(u[1])),
        ".dot_z": abs(float(u[2])),
    }


class InstanceTable:
    """Per-instance attribute records plus sparsification state.

    ``visible`` is the binary visibility decided by sparsification; ``hidden_scratch``
    is the per-pass working flag of the layering procedure. ``shuffle_order`` is a
    session-stable random permutation used as the deterministic sort tie-break.
    """

    def __init__(self, schema: AttributeSchema, rows: dict[int, dict[str, object]]):
        self.schema = schema
        self.rows: dict[int, dict[str, object]] = {}
        for iid, row in rows.items():
            iid = int(iid)
            if iid < 1:
                raise DatasetError(f"instance id must be >= 1, got {iid}", field="attributes.rows")
            self.rows[iid] = self._conform(iid, row)
        self._ids = np.array(sorted(self.rows), dtype=np.int64)
        self._columns: dict[str, np.ndarray] = {}
        self.visible: dict[int, bool] = {i: True for i in self.ids_list()}
        self.hidden_scratch: dict[int, bool] = {i: False for i in self.ids_list()}
        self.shuffle_order: dict[int, int] | None = None
        self._shuffle_seed: int | None = None

    def _conform(self, iid: int, row: dict[str, object]) -> dict[str, object]:
        out: dict[str, object] = {}
        for spec in self.schema.declared():
            if spec.name not in row:
                raise DatasetError(
                    f"instance {iid} is missing attribute {spec.name!r}",
                    field=f"attributes.rows.{iid}.{spec.name}",
                )
            value = row[spec.name]
            if spec.kind == SCALAR:
                try:
                    out[spec.name] = float(value)  # type: ignore[arg-type]
                except (TypeError, ValueError):
                    raise DatasetError(
                        f"instance {iid} attribute {spec.name!r} is not a scalar",
                        field=f"attributes.rows.{iid}.{spec.name}",
                    ) from None
            else:
                arr = np.asarray(value, dtype=np.float64)
                if arr.shape != (3,):
                    raise DatasetError(
                        f"instance {iid} attribute {spec.name!r} is not a 3-vector",
                        field=f"attributes.rows.{iid}.{spec.name}",
                    )
                out[spec.name] = (float(arr[0]), float(arr[1]), float(arr[2]))
                for suffix, dv in _derived_scalars(arr).items():
                    out[spec.name + suffix] = dv
        extra = set(row) - {s.name for s in self.schema.declared()}
        if extra:
            raise DatasetError(
                f"instance {iid} has attributes not in the schema: {sorted(extra)}",
                field=f"attributes.rows.{iid}",
            )
        return out

    # -- lookups -------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.rows)

    def __contains__(self, iid: int) -> bool:
        return int(iid) in self.rows

    @property
    def ids(self) -> np.ndarray:
        return self._ids

    def ids_list(self) -> list[int]:
        return [int(i) for i in self._ids]

    def scalar_column(self, name: str) -> np.ndarray:
        """Values of a scalar attribute aligned with ``self.ids``."""
        if name not in self._columns:
            if not self.schema.is_scalar(name):
                raise KeyError(f"unknown scalar attribute {name!r}")
            self._columns[name] = np.array(
                [self.rows[int(i)][name] for i in self._ids], dtype=np.float64
            )
        return self._columns[name]

    def scalar_value(self, iid: int, name: str) -> float:
        return float(self.rows[int(iid)][name])  # type: ignore[arg-type]

    def max_id(self) -> int:
        return int(self._ids[-1]) if len(self._ids) else 0

    # -- sparsification state ------------------------------------------------

    def ensure_shuffle(self, seed: int) -> None:
        """Fix the session shuffle order for the given seed (idempotent per seed)."""
        if self.shuffle_order is not None and self._shuffle_seed == seed:
            return
        rng = np.random.default_rng(seed)
        perm = rng.permutation(len(self._ids))
        self.shuffle_order = {int(i): int(r) for i, r in zip(self._ids, perm)}
        self._shuffle_seed = seed

    def reset_visibility(self) -> None:
        for i in self.ids_list():
            self.visible[i] = True
            self.hidden_scratch[i] = False

    def visible_lut(self, max_id: int | None = None) -> np.ndarray:
        """uint8 lookup table indexed by instance id; 1 = visible."""
        n = (max_id if max_id is not None else self.max_id()) + 1
        lut = np.zeros(n, dtype=np.uint8)
        for i, vis in self.visible.items():
            if i < n and vis:
                lut[i] = 1
        return lut


@dataclass
class GradientField:
    """World-space central-difference gradients of a raw volume."""

    dims: GridDims
    grad: np.ndarray  # float32, shape (*dims.shape, 3)
    max_magnitude: float

    def magnitudes(self) -> np.ndarray:
        g = self.grad.astype(np.float64)
        return np.sqrt((g * g).sum(axis=-1))


def compute_gradients(raw: RawVolume) -> GradientField:
    """Central differences scaled by spacing; one-sided stencils at the boundary."""
    sx, sy, sz = raw.dims.spacing
    vals = raw.values.astype(np.float64)
    if raw.dims.nx > 1 and raw.dims.ny > 1 and raw.dims.nz > 1:
        gx, gy, gz = np.gradient(vals, sx, sy, sz, edge_order=1)
    else:
        # np.gradient rejects singleton axes; those have zero derivative.
        gx = np.zeros_like(vals)
        gy = np.zeros_like(vals)
        gz = np.zeros_like(vals)
        for axis, (g, s) in enumerate(((gx, sx), (gy, sy), (gz, sz))):
            if vals.shape[axis] > 1:
                g[...] = np.gradient(vals, s, axis=axis, edge_order=1)
    grad = np.stack([gx, gy, gz], axis=-1).astype(np.float32)
    mag = np.sqrt((grad.astype(np.float64) ** 2).sum(axis=-1))
    return GradientField(dims=raw.dims, grad=grad, max_magnitude=float(mag.max(initial=0.0)))


def voxels_of_instance(seg: SegmentationVolume, iid: int) -> np.ndarray:
    """Indices (n, 3) of the voxels labelled ``iid``; empty when absent."""
    if iid < 1:
        raise ValueError(f"instance id must be >= 1, got {iid}")
    return np.argwhere(seg.ids == iid)


def voxel_world_positions(dims: GridDims, indices: np.ndarray) -> np.ndarray:
    """World-space centers (n, 3) of the given voxel indices."""
    pos = indices.astype(np.float64) + 0.5
    return pos * np.asarray(dims.spacing, dtype=np.float64)


def sample_trilinear(values: np.ndarray, dims: GridDims, p) -> np.ndarray | float:
    """Trilinear sample of a voxel-centred field at world position ``p``.

    ``values`` may carry trailing component axes (e.g. the 2-vector mask); each
    component is interpolated independently. Clamp-to-edge outside the last
    voxel centers. Reference implementation; the render kernel has its own.
    """
    sx, sy, sz = dims.spacing
    g = np.array([p[0] / sx - 0.5, p[1] / sy - 0.5, p[2] / sz - 0.5], dtype=np.float64)
    idx0 = np.empty(3, dtype=np.int64)
    frac = np.empty(3, dtype=np.float64)
    for a, n in enumerate(dims.shape):
        if n == 1:
            idx0[a], frac[a] = 0, 0.0
            continue
        i0 = math.floor(g[a])
        f = g[a] - i0
        if i0 < 0:
            i0, f = 0, 0.0
        elif i0 > n - 2:
            i0, f = n - 2, 1.0
        idx0[a], frac[a] = i0, f
    x0, y0, z0 = (int(v) for v in idx0)
    x1 = min(x0 + 1, dims.nx - 1)
    y1 = min(y0 + 1, dims.ny - 1)
    z1 = min(z0 + 1, dims.nz - 1)
    fx, fy, fz = frac
    c000 = values[x0, y0, z0]
    c100 = values[x1, y0, z0]
    c010 = values[x0, y1, z0]
    c110 = values[x1, y1, z0]
    c001 = values[x0, y0, z1]
    c101 = values[x1, y0, z1]
    c011 = values[x0, y1, z1]
    c111 = values[x1, y1, z1]
    c00 = c000 * (1 - fx) + c100 * fx
    c10 = c010 * (1 - fx) + c110 * fx
    c01 = c001 * (1 - fx) + c101 * fx
    c11 = c011 * (1 - fx) + c111 * fx
    c0 = c00 * (1 - fy) + c10 * fy
    c1 = c01 * (1 - fy) + c11 * fy
    return c0 * (1 - fz) + c1 * fz


# -- dataset descriptor I/O ---------------------------------------------------

_RAW_DTYPES = {"u8": np.uint8, "f32": np.float32}
_SEG_DTYPES = {"u32": np.uint32}


def _read_payload(path: Path, dims: GridDims, dtype: np.dtype, field_name: str) -> np.ndarray:
    if not path.is_file():
        raise DatasetError(f"volume payload file not found: {path}", field=field_name)
    data = np.fromfile(path, dtype=dtype)
    if data.size != dims.voxel_count:
        raise DatasetError(
            f"payload {path} holds {data.size} voxels, expected {dims.voxel_count}",
            field=field_name,
        )
    # File order is x-fastest, z-slowest.
    return np.ascontiguousarray(data.reshape((dims.nz, dims.ny, dims.nx)).transpose(2, 1, 0))


def _write_payload(path: Path, arr: np.ndarray) -> None:
    arr.transpose(2, 1, 0).tofile(path)


def load_dataset(descriptor_path: str | Path) -> tuple[RawVolume, SegmentationVolume, InstanceTable]:
    """Load a dataset from its JSON descriptor (see the README for the format)."""
    descriptor_path = Path(descriptor_path)
    if not descriptor_path.is_file():
        raise DatasetError(f"descriptor file not found: {descriptor_path}", field="descriptor")
    try:
        doc = json.loads(descriptor_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"descriptor is not valid JSON: {exc}", field="descriptor") from None
    base = descriptor_path.parent

    try:
        nx, ny, nz = (int(v) for v in doc["dims"])
        spacing = tuple(float(v) for v in doc.get("spacing", (1.0, 1.0, 1.0)))
    except (KeyError, TypeError, ValueError):
        raise DatasetError("descriptor 'dims'/'spacing' malformed", field="dims") from None
    dims = GridDims(nx, ny, nz, spacing)  # type: ignore[arg-type]

    raw_info = doc.get("raw")
    seg_info = doc.get("seg")
    if not isinstance(raw_info, dict) or not isinstance(seg_info, dict):
        raise DatasetError("descriptor must name 'raw' and 'seg' payloads", field="raw")
    raw_dtype = raw_info.get("dtype", "f32")
    if raw_dtype not in _RAW_DTYPES:
        raise DatasetError(f"unsupported raw dtype {raw_dtype!r}", field="raw.dtype")
    if seg_info.get("dtype", "u32") not in _SEG_DTYPES:
        raise DatasetError(f"unsupported seg dtype {seg_info.get('dtype')!r}", field="seg.dtype")
    for info, name in ((raw_info, "raw"), (seg_info, "seg")):
        if info.get("endianness", "little") != "little":
            raise DatasetError("only little-endian payloads are supported", field=f"{name}.endianness")

    raw_src = _read_payload(base / raw_info["file"], dims, _RAW_DTYPES[raw_dtype], "raw.file")
    seg_ids = _read_payload(base / seg_info["file"], dims, np.uint32, "seg.file")
    if seg_ids.max(initial=0) > np.iinfo(np.int32).max:
        raise DatasetError("segmentation ids exceed int32 range", field="seg.file")
    seg = SegmentationVolume(dims=dims, ids=seg_ids.astype(np.int32))

    attrs = doc.get("attributes")
    if not isinstance(attrs, dict) or "schema" not in attrs:
        raise DatasetError("descriptor must carry 'attributes.schema'", field="attributes.schema")
    try:
        pairs = [(e["name"], e["kind"]) for e in attrs["schema"]]
    except (TypeError, KeyError):
        raise DatasetError("schema entries need 'name' and 'kind'", field="attributes.schema") from None
    schema = AttributeSchema.from_declared(pairs)
    table = InstanceTable(schema, {int(k): v for k, v in attrs.get("rows", {}).items()})

    for iid in seg.instance_ids():
        if iid not in table:
            raise DatasetError(f"instance {iid} has no attributes", field="attributes.rows")

    src64 = raw_src.astype(np.float64)
    vmin, vmax = float(src64.min()), float(src64.max())
    if vmax > vmin:
        norm = ((src64 - vmin) / (vmax - vmin)).astype(np.float32)
    else:
        norm = np.zeros(dims.shape, dtype=np.float32)
    raw = RawVolume(
        dims=dims,
        values=np.ascontiguousarray(norm),
        value_range=(vmin, vmax),
        source_dtype=raw_dtype,
        source_values=raw_src if raw_dtype == "f32" else None,
    )
    return raw, seg, table


def save_dataset(
    out_dir: str | Path,
    raw: RawVolume,
    seg: SegmentationVolume,
    table: InstanceTable,
    name: str = "dataset",
) -> Path:
    """Write descriptor + payloads; returns the descriptor path.

    The written payload bytes round-trip ``load_dataset`` exactly.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    raw_file, seg_file = f"{name}.raw.bin", f"{name}.seg.bin"

    if raw.source_values is not None:
        payload = raw.source_values.astype(np.float32)
    else:
        vmin, vmax = raw.value_range
        denorm = raw.values.astype(np.float64) * (vmax - vmin) + vmin
        if raw.source_dtype == "u8":
            payload = np.round(denorm).astype(np.uint8)
        else:
            payload = denorm.astype(np.float32)
    _write_payload(out_dir / raw_file, payload)
    _write_payload(out_dir / seg_file, seg.ids.astype(np.uint32))

    rows: dict[str, dict[str, object]] = {}
    declared = table.schema.declared()
    for iid in table.ids_list():
        row = table.rows[iid]
        rows[str(iid)] = {
            s.name: (list(row[s.name]) if s.kind == VECTOR3 else row[s.name]) for s in declared
        }
    doc = {
        "dims": list(raw.dims.shape),
        "spacing": list(raw.dims.spacing),
        "raw": {"file": raw_file, "dtype": raw.source_dtype, "endianness": "little"},
        "seg": {"file": seg_file, "dtype": "u32", "endianness": "little"},
        "attributes": {
            "schema": [{"name": s.name, "kind": s.kind} for s in declared],
            "rows": rows,
        },
    }
    descriptor = out_dir / f"{name}.json"
    descriptor.write_text(json.dumps(doc, indent=2))
    return descriptor
