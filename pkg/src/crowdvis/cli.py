"""Command-line front: dataset generation, offline rendering, serving, benchmarks."""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

from . import grouping, mask as mask_mod, sparsify as sparsify_mod
from .assess import assess_visibility
from .errors import DatasetError, HierarchyError, PlacementError
from .render import (
    BlendWeights,
    Camera,
    RawTransferFunction,
    RenderOptions,
    fit_camera,
    make_scene,
    render_frame,
    write_id_buffer,
    write_png,
)
from .synthetic import SceneSpec, generate_synthetic
from .voldata import GridDims, compute_gradients, load_dataset, save_dataset


def _parse_triple(text: str, cast=float):
    parts = [cast(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated values, got {text!r}")
    return tuple(parts)


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None


def _default_hierarchy(table) -> list[grouping.HierarchyNode]:
    """Single catch-all group over the first scalar attribute."""
    name = table.schema.scalar_names()[0]
    return [
        grouping.HierarchyNode(
            attribute=name,
            ranges=[grouping.RangeEntry(ranges=grouping.RangeSet.single(-math.inf, math.inf))],
        )
    ]


def _load_params(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _camera_from_args(args, dims: GridDims) -> Camera:
    width, height = args.size
    if args.camera:
        doc = json.loads(Path(args.camera).read_text())
        return Camera(
            eye=tuple(doc["eye"]),
            target=tuple(doc["target"]),
            up=tuple(doc.get("up", (0.0, 0.0, 1.0))),
            fov_y_deg=float(doc.get("fovY", 45.0)),
            width=width,
            height=height,
        )
    return fit_camera(dims, width=width, height=height)


def _prepare_scene(args):
    """Shared pipeline for render/bench: load, group, sparsify, mask, scene."""
    raw, seg, table = load_dataset(args.dataset)
    camera = _camera_from_args(args, raw.dims)
    params_doc = _load_params(args.params)

    if args.hierarchy:
        roots = grouping.hierarchy_from_json(json.loads(Path(args.hierarchy).read_text()))
    else:
        roots = _default_hierarchy(table)
    preds = grouping.linearize(roots, table)
    assignment = grouping.assign_groups(preds, table)

    sp_doc = params_doc.get("sparsify", {})
    seed = args.seed if args.seed is not None else int(sp_doc.get("seed", 0))
    sparams = sparsify_mod.SparsifyParams(
        mode=sp_doc.get("mode", sparsify_mod.MODE_UNIFORM),
        camera_pos=camera.eye,
        kappa_t=float(sp_doc.get("kappaT", 2.0)),
        kappa_s=float(sp_doc.get("kappaS", 1.0)),
        rng_seed=seed,
    )
    gradients = (
        compute_gradients(raw)
        if sparams.mode == sparsify_mod.MODE_CONTEXT or params_doc.get("shading")
        else None
    )
    table.ensure_shuffle(seed)
    importances = sparsify_mod.aggregate_importance(seg, table, sparams, gradients)
    sparsify_mod.sparsify_groups(preds, assignment, importances, table)

    vis_mask = mask_mod.build_visibility_mask(seg, assignment, table.visible, len(preds))
    tf = mask_mod.build_transfer_function({p.group_index: p.color for p in preds}, len(preds))

    blend_doc = params_doc.get("blend", {})
    weights = BlendWeights(
        w_color=float(blend_doc.get("wColor", 0.0)),
        w_transfer=float(blend_doc.get("wTransfer", 0.0)),
        w_alpha=float(blend_doc.get("wAlpha", 0.0)),
    )
    raw_tf = (
        RawTransferFunction.from_json(params_doc["rawTF"])
        if "rawTF" in params_doc
        else RawTransferFunction.default_grayscale()
    )
    options = RenderOptions(
        step_voxels=float(params_doc.get("stepVoxels", 0.5)),
        background=tuple(params_doc.get("background", (0.0, 0.0, 0.0, 1.0))),
        eps_id=float(params_doc.get("epsId", 0.05)),
        shading=bool(params_doc.get("shading", False)),
    )
    scene = make_scene(
        raw, seg, table, assignment, vis_mask, tf, raw_tf, weights, epoch=0, gradients=gradients
    )
    return scene, camera, options, (raw, seg, table, preds, assignment, sparams, gradients)


def _cmd_generate(args) -> int:
    dims = GridDims(*args.dims, spacing=args.spacing)
    spec = SceneSpec(
        dims=dims,
        n_boxes=args.boxes,
        n_spheres=args.spheres,
        n_ellipsoids=args.ellipsoids,
        size_range=(args.size_min, args.size_max),
        noise_amplitude=args.noise,
    )
    raw, seg, table = generate_synthetic(spec, args.seed)
    descriptor = save_dataset(args.out, raw, seg, table, name=args.name)
    print(json.dumps({"descriptor": str(descriptor), "instances": len(table)}))
    return 0


def _cmd_render(args) -> int:
    scene, camera, options, extras = _prepare_scene(args)
    _, _, table, _, assignment, _, _ = extras
    frame = render_frame(scene, camera, options)
    write_png(frame, args.out)
    outputs = {"image": str(args.out)}
    if args.report:
        report = assess_visibility(frame, assignment, table, expected_epoch=scene.epoch)
        Path(args.report).write_text(json.dumps(report.to_json(), indent=2))
        outputs["report"] = str(args.report)
    if args.id_buffer:
        write_id_buffer(frame.ids, args.id_buffer)
        outputs["idBuffer"] = str(args.id_buffer)
    if args.mask_out:
        vis_mask = mask_mod.VisibilityMask(dims=scene.dims, values=scene.mask_values)
        out = Path(args.mask_out)
        descriptor = mask_mod.export_mask(vis_mask, out.parent, name=out.stem)
        outputs["mask"] = str(descriptor)
    if args.tf_out:
        tf = mask_mod.TransferFunction2D(
            n_groups=scene.n_groups, group_colors=scene.tf_colors, dead_zone=scene.dead_zone
        )
        Path(args.tf_out).write_bytes(tf.to_image_bytes())
        outputs["transferFunction"] = str(args.tf_out)
    print(json.dumps(outputs))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return 0


def _cmd_bench(args) -> int:
    if args.dataset is None:
        dims = GridDims(args.synthetic, args.synthetic, args.synthetic)
        spec = SceneSpec(
            dims=dims, n_boxes=60, n_spheres=80, n_ellipsoids=60,
            size_range=(dims.nx / 48.0, dims.nx / 16.0),
        )
        raw, seg, table = generate_synthetic(spec, args.seed or 0)
        import tempfile

        tmp = Path(tempfile.mkdtemp(prefix="crowdvis-bench-"))
        args.dataset = str(save_dataset(tmp, raw, seg, table, name="bench"))

    raw, seg, table = load_dataset(args.dataset)
    camera = _camera_from_args(args, raw.dims)
    scalar = table.schema.scalar_names()[0]
    col = table.scalar_column(scalar) if len(table) else None
    if col is not None and len(col):
        mid = float(col.min() + (col.max() - col.min()) / 2.0) if col.max() > col.min() else None
    else:
        mid = None
    if mid is not None:
        ranges = [
            grouping.RangeEntry(ranges=grouping.RangeSet.single(-math.inf, mid), fraction=0.7),
            grouping.RangeEntry(ranges=grouping.RangeSet.single(mid, math.inf), fraction=0.4),
        ]
    else:
        ranges = [grouping.RangeEntry(ranges=grouping.RangeSet.single(-math.inf, math.inf), fraction=0.5)]
    roots = [grouping.HierarchyNode(attribute=scalar, ranges=ranges)]

    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    preds = grouping.linearize(roots, table)
    timings["linearize"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    assignment = grouping.assign_groups(preds, table)
    timings["assign"] = time.perf_counter() - t0

    params = sparsify_mod.SparsifyParams(
        mode=sparsify_mod.MODE_DEPTH, camera_pos=camera.eye, rng_seed=args.seed or 0
    )
    table.ensure_shuffle(params.rng_seed)
    t0 = time.perf_counter()
    importances = sparsify_mod.aggregate_importance(seg, table, params)
    timings["aggregate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    sparsify_mod.sparsify_groups(preds, assignment, importances, table)
    timings["sparsify"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    vis_mask = mask_mod.build_visibility_mask(seg, assignment, table.visible, len(preds))
    timings["maskBuild"] = time.perf_counter() - t0

    tf = mask_mod.build_transfer_function({p.group_index: p.color for p in preds}, len(preds))
    scene = make_scene(
        raw, seg, table, assignment, vis_mask, tf,
        RawTransferFunction.default_grayscale(), BlendWeights(),
    )
    render_frame(scene, Camera(eye=camera.eye, target=camera.target, width=32, height=32))  # JIT warmup
    t0 = time.perf_counter()
    frame = render_frame(scene, camera)
    timings["render"] = time.perf_counter() - t0

    doc = {
        "dataset": str(args.dataset),
        "dims": list(raw.dims.shape),
        "instances": len(table),
        "frame": f"{camera.width}x{camera.height}",
        "seconds": {k: round(v, 9) for k, v in timings.items()},
    }
    print(json.dumps(doc, indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2))
        write_png(frame, Path(args.out).with_suffix(".png"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdvis")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic dataset to disk")
    gen.add_argument("--out", required=True, type=Path)
    gen.add_argument("--name", default="synthetic")
    gen.add_argument("--dims", type=lambda s: _parse_triple(s, int), default=(64, 64, 64))
    gen.add_argument("--spacing", type=_parse_triple, default=(1.0, 1.0, 1.0))
    gen.add_argument("--boxes", type=int, default=20)
    gen.add_argument("--spheres", type=int, default=20)
    gen.add_argument("--ellipsoids", type=int, default=20)
    gen.add_argument("--size-min", type=float, default=2.0)
    gen.add_argument("--size-max", type=float, default=5.0)
    gen.add_argument("--noise", type=float, default=0.05)
    gen.add_argument("--seed", type=int, default=0)
    gen.set_defaults(func=_cmd_generate)

    ren = sub.add_parser("render", help="offline render to PNG plus report JSON")
    ren.add_argument("--dataset", required=True)
    ren.add_argument("--hierarchy")
    ren.add_argument("--params")
    ren.add_argument("--camera")
    ren.add_argument("--size", type=_parse_size, default=(512, 512))
    ren.add_argument("--out", required=True, type=Path)
    ren.add_argument("--report")
    ren.add_argument("--id-buffer")
    ren.add_argument("--mask-out", help="write the visibility mask (binary + descriptor)")
    ren.add_argument("--tf-out", help="write the 2D transfer function as a PNG")
    ren.add_argument("--seed", type=int)
    ren.set_defaults(func=_cmd_render)

    srv = sub.add_parser("serve", help="start the HTTP + WebSocket API")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8642)
    srv.set_defaults(func=_cmd_serve)

    ben = sub.add_parser("bench", help="per-stage timings as JSON")
    ben.add_argument("--dataset")
    ben.add_argument("--synthetic", type=int, default=256, help="edge length when generating")
    ben.add_argument("--camera")
    ben.add_argument("--size", type=_parse_size, default=(512, 512))
    ben.add_argument("--seed", type=int)
    ben.add_argument("--out")
    ben.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DatasetError, HierarchyError, PlacementError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
