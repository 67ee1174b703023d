"""Volume data model, descriptor I/O and gradients."""
from __future__ import annotations

import json

import numpy as np
import pytest

from crowdvis.errors import DatasetError
from crowdvis.voldata import (
    AttributeSchema,
    GridDims,
    InstanceTable,
    RawVolume,
    SegmentationVolume,
    compute_gradients,
    load_dataset,
    sample_trilinear,
    save_dataset,
    voxels_of_instance,
)


def write_dataset(tmp_path, dims, raw_values, seg_ids, rows, raw_dtype="f32"):
    """Write a descriptor + payloads from (nx, ny, nz) arrays."""
    nx, ny, nz = dims
    raw_payload = np.asarray(raw_values).transpose(2, 1, 0)
    (tmp_path / "raw.bin").write_bytes(
        raw_payload.astype(np.uint8 if raw_dtype == "u8" else np.float32).tobytes()
    )
    (tmp_path / "seg.bin").write_bytes(np.asarray(seg_ids).transpose(2, 1, 0).astype(np.uint32).tobytes())
    doc = {
        "dims": list(dims),
        "spacing": [1.0, 1.0, 1.0],
        "raw": {"file": "raw.bin", "dtype": raw_dtype, "endianness": "little"},
        "seg": {"file": "seg.bin", "dtype": "u32", "endianness": "little"},
        "attributes": {
            "schema": [{"name": "volume", "kind": "scalar"}],
            "rows": {str(k): v for k, v in rows.items()},
        },
    }
    path = tmp_path / "dataset.json"
    path.write_text(json.dumps(doc))
    return path


class TestGridDims:
    def test_rejects_zero_counts(self):
        with pytest.raises(ValueError):
            GridDims(0, 4, 4)

    def test_rejects_nonpositive_spacing(self):
        with pytest.raises(ValueError):
            GridDims(4, 4, 4, spacing=(1.0, 0.0, 1.0))

    def test_bounding_diameter_is_diagonal(self):
        dims = GridDims(3, 4, 12, spacing=(1.0, 1.0, 1.0))
        assert dims.bounding_diameter() == pytest.approx(13.0)


class TestLoadDataset:
    def test_degenerate_empty_scene(self, tmp_path):
        path = write_dataset(tmp_path, (2, 2, 2), np.zeros((2, 2, 2)), np.zeros((2, 2, 2)), {})
        raw, seg, table = load_dataset(path)
        assert len(table) == 0
        assert seg.instance_ids() == []
        assert np.all(raw.values == 0.0)

    def test_missing_attribute_row_reports_instance(self, tmp_path):
        ids = np.zeros((2, 2, 2))
        ids[0, 0, 0] = 7
        path = write_dataset(tmp_path, (2, 2, 2), np.zeros((2, 2, 2)), ids, {})
        with pytest.raises(DatasetError, match="instance 7 has no attributes"):
            load_dataset(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="not found"):
            load_dataset(tmp_path / "nope.json")

    def test_payload_size_mismatch(self, tmp_path):
        path = write_dataset(tmp_path, (2, 2, 2), np.zeros((2, 2, 2)), np.zeros((2, 2, 2)), {})
        doc = json.loads(path.read_text())
        doc["dims"] = [2, 2, 3]
        path.write_text(json.dumps(doc))
        with pytest.raises(DatasetError, match="expected 12"):
            load_dataset(path)

    def test_malformed_schema(self, tmp_path):
        path = write_dataset(tmp_path, (2, 2, 2), np.zeros((2, 2, 2)), np.zeros((2, 2, 2)), {})
        doc = json.loads(path.read_text())
        doc["attributes"]["schema"] = [{"name": "volume", "kind": "tensor"}]
        path.write_text(json.dumps(doc))
        with pytest.raises(DatasetError, match="tensor"):
            load_dataset(path)

    def test_values_normalized_by_min_max(self, tmp_path):
        vals = np.full((2, 2, 2), 10.0)
        vals[1, 1, 1] = 30.0
        vals[0, 1, 0] = 20.0
        path = write_dataset(tmp_path, (2, 2, 2), vals, np.zeros((2, 2, 2)), {})
        raw, _, _ = load_dataset(path)
        assert raw.values[0, 0, 0] == pytest.approx(0.0)
        assert raw.values[0, 1, 0] == pytest.approx(0.5)
        assert raw.values[1, 1, 1] == pytest.approx(1.0)

    def test_payload_order_is_x_fastest(self, tmp_path):
        vals = np.arange(8, dtype=np.float64).reshape(2, 2, 2)  # [x, y, z]
        path = write_dataset(tmp_path, (2, 2, 2), vals, np.zeros((2, 2, 2)), {})
        flat = np.fromfile(tmp_path / "raw.bin", dtype=np.float32)
        # x varies fastest on disk: element 1 is vals[1, 0, 0]
        assert flat[1] == vals[1, 0, 0]
        raw, _, _ = load_dataset(path)
        assert raw.values[1, 0, 0] == pytest.approx(vals[1, 0, 0] / 7.0)


class TestFibersScale:
    def test_fibers_like_descriptor_loads_all_instances(self, tmp_path):
        # 400 x 401 x 800 volume, 3828 instances with 18 attributes each
        nx, ny, nz = 400, 401, 800
        n_vox = nx * ny * nz
        rng = np.random.default_rng(0)
        raw = np.zeros(n_vox, dtype=np.uint8)
        raw[::97] = rng.integers(1, 255, size=raw[::97].shape[0])
        raw.tofile(tmp_path / "raw.bin")
        ids = np.zeros(n_vox, dtype=np.uint32)
        ids[rng.choice(n_vox, size=3828, replace=False)] = np.arange(1, 3829)
        ids.tofile(tmp_path / "seg.bin")
        schema = [{"name": f"feat{i:02d}", "kind": "scalar"} for i in range(18)]
        rows = {
            str(i): {f"feat{j:02d}": float(i * 18 + j) for j in range(18)}
            for i in range(1, 3829)
        }
        doc = {
            "dims": [nx, ny, nz],
            "spacing": [1.0, 1.0, 1.0],
            "raw": {"file": "raw.bin", "dtype": "u8", "endianness": "little"},
            "seg": {"file": "seg.bin", "dtype": "u32", "endianness": "little"},
            "attributes": {"schema": schema, "rows": rows},
        }
        (tmp_path / "fibers.json").write_text(json.dumps(doc))
        raw_vol, seg, table = load_dataset(tmp_path / "fibers.json")
        assert len(table) == 3828
        assert len(table.schema.declared()) == 18
        assert seg.dims.shape == (400, 401, 800)
        assert len(seg.instance_ids()) == 3828


class TestRoundTrip:
    @pytest.mark.parametrize("dtype", ["u8", "f32"])
    def test_save_load_payloads_byte_identical(self, tmp_path, dtype):
        rng = np.random.default_rng(5)
        vals = rng.integers(0, 256, size=(4, 5, 6)) if dtype == "u8" else rng.random((4, 5, 6)) * 7 - 3
        ids = rng.integers(0, 3, size=(4, 5, 6))
        rows = {1: {"volume": 1.0}, 2: {"volume": 2.0}}
        src = write_dataset(tmp_path, (4, 5, 6), vals, ids, rows, raw_dtype=dtype)
        loaded = load_dataset(src)
        out = save_dataset(tmp_path / "resaved", *loaded, name="copy")
        assert (tmp_path / "resaved" / "copy.raw.bin").read_bytes() == (tmp_path / "raw.bin").read_bytes()
        assert (tmp_path / "resaved" / "copy.seg.bin").read_bytes() == (tmp_path / "seg.bin").read_bytes()
        reloaded = load_dataset(out)
        assert np.array_equal(reloaded[1].ids, loaded[1].ids)
        assert np.array_equal(reloaded[0].values, loaded[0].values)


class TestGradients:
    def test_constant_volume_is_zero(self):
        dims = GridDims(5, 5, 5)
        raw = RawVolume(dims=dims, values=np.full(dims.shape, 0.3, dtype=np.float32))
        grad = compute_gradients(raw)
        assert grad.max_magnitude == 0.0
        assert np.all(grad.grad == 0.0)

    def test_linear_ramp_interior(self):
        dims = GridDims(9, 4, 4)
        xs = np.arange(9, dtype=np.float32) / 8.0
        vals = np.broadcast_to(xs[:, None, None], dims.shape).astype(np.float32).copy()
        grad = compute_gradients(RawVolume(dims=dims, values=vals))
        interior = grad.grad[1:-1, :, :, 0]
        np.testing.assert_allclose(interior, 1.0 / 8.0, atol=1e-7)
        np.testing.assert_allclose(grad.grad[..., 1:], 0.0, atol=1e-7)

    def test_affine_field_exact_at_interior(self):
        dims = GridDims(6, 6, 6, spacing=(0.5, 2.0, 1.25))
        x = dims.axis_centers(0)[:, None, None]
        y = dims.axis_centers(1)[None, :, None]
        z = dims.axis_centers(2)[None, None, :]
        field = (0.2 * x - 0.1 * y + 0.05 * z).astype(np.float32)
        grad = compute_gradients(RawVolume(dims=dims, values=np.ascontiguousarray(field)))
        inner = grad.grad[1:-1, 1:-1, 1:-1]
        np.testing.assert_allclose(inner[..., 0], 0.2, atol=1e-5)
        np.testing.assert_allclose(inner[..., 1], -0.1, atol=1e-5)
        np.testing.assert_allclose(inner[..., 2], 0.05, atol=1e-5)

    def test_random_volume_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(42)
        dims = GridDims(8, 8, 8, spacing=(0.7, 1.3, 2.1))
        vals = rng.random(dims.shape).astype(np.float32)
        grad = compute_gradients(RawVolume(dims=dims, values=vals))

        v = vals.astype(np.float64)
        expected = np.zeros((*dims.shape, 3))
        for i in range(8):
            for j in range(8):
                for k in range(8):
                    for axis, s in enumerate(dims.spacing):
                        idx = [i, j, k]
                        n = dims.shape[axis]
                        if 0 < idx[axis] < n - 1:
                            hi = idx.copy()
                            lo = idx.copy()
                            hi[axis] += 1
                            lo[axis] -= 1
                            d = (v[tuple(hi)] - v[tuple(lo)]) / (2 * s)
                        elif idx[axis] == 0:
                            hi = idx.copy()
                            hi[axis] += 1
                            d = (v[tuple(hi)] - v[tuple(idx)]) / s
                        else:
                            lo = idx.copy()
                            lo[axis] -= 1
                            d = (v[tuple(idx)] - v[tuple(lo)]) / s
                        expected[i, j, k, axis] = d
        np.testing.assert_allclose(grad.grad, expected, atol=1e-6)
        assert grad.max_magnitude == pytest.approx(
            np.sqrt((expected**2).sum(axis=-1)).max(), rel=1e-5
        )


class TestVoxelsOfInstance:
    def test_explicit_voxels(self):
        dims = GridDims(2, 2, 2)
        ids = np.zeros(dims.shape, dtype=np.int32)
        ids[0, 0, 0] = 3
        ids[1, 0, 0] = 3
        seg = SegmentationVolume(dims=dims, ids=ids)
        got = voxels_of_instance(seg, 3)
        assert sorted(map(tuple, got)) == [(0, 0, 0), (1, 0, 0)]

    def test_absent_id_is_empty(self):
        seg = SegmentationVolume(dims=GridDims(2, 2, 2), ids=np.zeros((2, 2, 2), dtype=np.int32))
        assert len(voxels_of_instance(seg, 12)) == 0

    def test_partition_identity(self, small_synthetic):
        _, seg, table = small_synthetic
        total = sum(len(voxels_of_instance(seg, i)) for i in table.ids_list())
        background = int((seg.ids == 0).sum())
        assert total + background == seg.dims.voxel_count

    def test_counts_match_volume_attribute(self, small_synthetic):
        _, seg, table = small_synthetic
        voxvol = seg.dims.voxel_volume
        for iid in table.ids_list():
            count = len(voxels_of_instance(seg, iid))
            assert table.scalar_value(iid, "volume") == pytest.approx(count * voxvol)


class TestDerivedScalars:
    def test_vector_attribute_exposes_derived(self):
        schema = AttributeSchema.from_declared([("orientation", "vector3")])
        table = InstanceTable(schema, {1: {"orientation": (0.0, 0.0, 2.0)}})
        assert table.scalar_value(1, "orientation.polar") == pytest.approx(0.0)
        assert table.scalar_value(1, "orientation.dot_z") == pytest.approx(1.0)
        table2 = InstanceTable(schema, {1: {"orientation": (1.0, 1.0, 0.0)}})
        assert table2.scalar_value(1, "orientation.polar") == pytest.approx(90.0)
        assert table2.scalar_value(1, "orientation.azimuth") == pytest.approx(45.0)

    def test_non_scalar_rejected_in_scalar_column(self):
        schema = AttributeSchema.from_declared([("orientation", "vector3")])
        table = InstanceTable(schema, {1: {"orientation": (0.0, 0.0, 1.0)}})
        with pytest.raises(KeyError):
            table.scalar_column("orientation")


class TestTrilinear:
    def test_exact_at_voxel_centers(self):
        rng = np.random.default_rng(0)
        dims = GridDims(4, 4, 4)
        vals = rng.random(dims.shape)
        for idx in [(0, 0, 0), (3, 3, 3), (1, 2, 3)]:
            p = [(i + 0.5) for i in idx]
            assert sample_trilinear(vals, dims, p) == pytest.approx(vals[idx])

    def test_linear_field_reproduced(self):
        dims = GridDims(5, 5, 5)
        x = dims.axis_centers(0)[:, None, None]
        y = dims.axis_centers(1)[None, :, None]
        z = dims.axis_centers(2)[None, None, :]
        vals = 0.1 * x + 0.2 * y + 0.3 * z
        p = (2.37, 1.81, 3.14)
        expected = 0.1 * p[0] + 0.2 * p[1] + 0.3 * p[2]
        assert sample_trilinear(vals, dims, p) == pytest.approx(expected, abs=1e-12)
