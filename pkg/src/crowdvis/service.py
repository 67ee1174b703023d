"""Stateful session engine and its HTTP + WebSocket API.

Commands apply in arrival order under a per-session lock (single writer).
Mutations that change what the visibility mask encodes (hierarchy edits,
ratio changes, sparsification changes, dataset loads) bump the session epoch;
the mask and transfer function are rebuilt lazily before the next render.
Frames and reports always carry the epoch they were produced under.
"""
from __future__ import annotations

import asyncio
import base64
import threading
import uuid
from dataclasses import replace
from pathlib import Path

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, Response
from starlette.concurrency import run_in_threadpool

from . import grouping, mask as mask_mod, sparsify as sparsify_mod
from .assess import GroupVisibilityReport, assess_visibility
from .errors import CommandError, DatasetError, HierarchyError
from .grouping import GroupAssignment, HierarchyNode, LinearPredicate, Path as GroupPath
from .render import (
    BlendWeights,
    Camera,
    FrameSet,
    RawTransferFunction,
    RenderOptions,
    fit_camera,
    frame_to_png_bytes,
    make_scene,
    render_frame,
    render_id_only,
)
from .voldata import GradientField, compute_gradients, load_dataset

COMMANDS = (
    "loadDataset",
    "setHierarchy",
    "setFraction",
    "setLock",
    "setSparsifyParams",
    "setBlendWeights",
    "setRawTF",
    "setCamera",
    "requestFrame",
    "requestAssessment",
)


def _parse_path(raw) -> GroupPath:
    try:
        path = tuple((int(ni), int(ri)) for ni, ri in raw)
    except (TypeError, ValueError):
        raise CommandError("'path' must be a list of [nodeIndex, rangeIndex] pairs", field="path")
    if not path:
        raise CommandError("'path' must not be empty", field="path")
    return path


class Session:
    """One exploration session: dataset, hierarchy, sparsification and view state."""

    def __init__(self, dataset=None):
        self.lock = threading.Lock()
        self.raw = self.seg = self.table = None
        self.dataset_descriptor: str | None = None
        self._gradients: GradientField | None = None
        self.roots: list[HierarchyNode] = []
        self.preds: list[LinearPredicate] = []
        self.assignment = GroupAssignment(group_of={}, n_groups=0)
        self.color_registry: dict[str, grouping.RGBA] = {}
        self.sparsify_params = sparsify_mod.SparsifyParams()
        self.weights = BlendWeights()
        self.raw_tf = RawTransferFunction.default_grayscale()
        self.camera: Camera | None = None
        self.options = RenderOptions()
        self.epoch = 0
        self._mask = None
        self._tf = None
        self._mask_epoch = -1
        self.last_report: GroupVisibilityReport | None = None
        if dataset is not None:
            self._install_dataset(*dataset)

    # -- dataset ----------------------------------------------------------------

    def _install_dataset(self, raw, seg, table) -> None:
        self.raw, self.seg, self.table = raw, seg, table
        self._gradients = None
        self.roots = []
        self.preds = []
        self.assignment = GroupAssignment(
            group_of={i: 0 for i in table.ids_list()}, n_groups=0
        )
        self.table.ensure_shuffle(self.sparsify_params.rng_seed)
        self.camera = self.camera or fit_camera(raw.dims)
        self.epoch += 1

    def _require_dataset(self) -> None:
        if self.raw is None:
            raise CommandError("no dataset loaded", field="dataset")

    def gradients(self) -> GradientField:
        self._require_dataset()
        if self._gradients is None:
            self._gradients = compute_gradients(self.raw)
        return self._gradients

    # -- grouping ----------------------------------------------------------------

    def _leaf_counts(self) -> dict[GroupPath, int]:
        counts_by_group = self.assignment.counts()
        paths = grouping.leaf_paths(self.roots)
        return {p: counts_by_group.get(i + 1, 0) for i, p in enumerate(paths)}

    def _relink(self) -> None:
        """Re-derive predicates, colors, assignment and displayed ratios."""
        preds = grouping.linearize(self.roots, self.table)
        # Persist colors across edits keyed by the group's attribute/bounds path.
        for pred in preds:
            entry = grouping.entry_at(self.roots, pred.path)
            key = pred.path_key
            if entry.color is not None:
                self.color_registry[key] = entry.color
            elif key in self.color_registry:
                entry.color = self.color_registry[key]
            else:
                entry.color = pred.color  # linearization default
                self.color_registry[key] = pred.color
        self.preds = grouping.linearize(self.roots, self.table)
        self.assignment = grouping.assign_groups(self.preds, self.table)
        grouping.cascade_up(self.roots, self._leaf_counts())

    def _effective_sparsify_params(self) -> sparsify_mod.SparsifyParams:
        eye = self.camera.eye if self.camera is not None else (0.0, 0.0, 0.0)
        return replace(self.sparsify_params, camera_pos=eye)

    def _resparsify(self) -> None:
        if self.table is None or not self.preds:
            return
        params = self._effective_sparsify_params()
        self.table.ensure_shuffle(params.rng_seed)
        grads = (
            self.gradients() if params.mode == sparsify_mod.MODE_CONTEXT else None
        )
        importances = sparsify_mod.aggregate_importance(self.seg, self.table, params, grads)
        sparsify_mod.sparsify_groups(self.preds, self.assignment, importances, self.table)

    def _ensure_mask(self) -> None:
        if self._mask_epoch == self.epoch and self._mask is not None:
            return
        self._require_dataset()
        n = len(self.preds)
        self._mask = mask_mod.build_visibility_mask(
            self.seg, self.assignment, self.table.visible, n
        )
        self._tf = mask_mod.build_transfer_function(
            {p.group_index: p.color for p in self.preds}, n
        )
        self._mask_epoch = self.epoch

    # -- rendering ----------------------------------------------------------------

    def _scene(self):
        self._ensure_mask()
        grads = self._gradients if self.options.shading else None
        return make_scene(
            self.raw,
            self.seg,
            self.table,
            self.assignment,
            self._mask,
            self._tf,
            self.raw_tf,
            self.weights,
            epoch=self.epoch,
            gradients=grads,
        )

    def render(self) -> tuple[FrameSet, GroupVisibilityReport]:
        self._require_dataset()
        if self.camera is None:
            raise CommandError("no camera configured", field="camera")
        if self.options.shading:
            self.gradients()
        frame = render_frame(self._scene(), self.camera, self.options)
        report = assess_visibility(frame, self.assignment, self.table, expected_epoch=self.epoch)
        self.last_report = report
        return frame, report

    def assessment(self) -> GroupVisibilityReport:
        self._require_dataset()
        if self.camera is None:
            raise CommandError("no camera configured", field="camera")
        id_frame = render_id_only(self._scene(), self.camera, self.options)
        report = assess_visibility(id_frame, self.assignment, self.table, expected_epoch=self.epoch)
        self.last_report = report
        return report

    def _report_json(self, report: GroupVisibilityReport) -> dict:
        doc = report.to_json()
        for row in doc["groups"]:
            pred = self.preds[row["group"] - 1]
            attr = pred.conjuncts[-1][0]
            hist = grouping.group_histogram(
                self.table, self.assignment, row["group"], attr, bins=16
            )
            row["pathKey"] = pred.path_key
            row["histogram"] = {
                "attribute": hist.attribute,
                "lo": hist.lo,
                "hi": hist.hi,
                "counts": list(hist.counts),
            }
        return doc

    # -- commands ----------------------------------------------------------------

    def apply(self, command: dict) -> list[dict]:
        """Apply one command; returns the events it produced.

        Raises :class:`CommandError` (session unchanged) on malformed input.
        """
        if not isinstance(command, dict) or "cmd" not in command:
            raise CommandError("command must be an object with a 'cmd' field", field="cmd")
        cmd = command["cmd"]
        if cmd not in COMMANDS:
            raise CommandError(f"unknown command {cmd!r}", field="cmd")
        with self.lock:
            return getattr(self, f"_cmd_{cmd}")(command)

    def _cmd_loadDataset(self, command: dict) -> list[dict]:
        descriptor = command.get("descriptor")
        if not isinstance(descriptor, str):
            raise CommandError("'descriptor' must be a path string", field="descriptor")
        try:
            dataset = load_dataset(descriptor)
        except DatasetError as exc:
            raise CommandError(str(exc), field=exc.field) from None
        self._install_dataset(*dataset)
        self.dataset_descriptor = descriptor
        return [{"event": "state", "epoch": self.epoch, "dataset": self._dataset_json()}]

    def _cmd_setHierarchy(self, command: dict) -> list[dict]:
        self._require_dataset()
        doc = command.get("hierarchy")
        if doc is None:
            raise CommandError("'hierarchy' document missing", field="hierarchy")
        try:
            roots = grouping.hierarchy_from_json(doc)
            grouping.validate_hierarchy(roots, self.table)
        except HierarchyError as exc:
            raise CommandError(str(exc), field=exc.field or "hierarchy") from None
        self.roots = roots
        self._relink()
        self.epoch += 1
        self._resparsify()
        return [{"event": "state", "epoch": self.epoch, "groups": len(self.preds)}]

    def _cmd_setFraction(self, command: dict) -> list[dict]:
        self._require_dataset()
        path = _parse_path(command.get("path"))
        f = command.get("f")
        if not isinstance(f, (int, float)) or not 0.0 <= float(f) <= 1.0:
            raise CommandError("'f' must be a number in [0, 1]", field="f")
        try:
            result = grouping.cascade_down(self.roots, path, float(f), self._leaf_counts())
        except HierarchyError as exc:
            raise CommandError(str(exc), field="path") from None
        if result.status == "all_locked":
            return [
                {
                    "event": "warning",
                    "epoch": self.epoch,
                    "message": "all groups under the target are locked; nothing changed",
                }
            ]
        self.preds = grouping.linearize(self.roots, self.table)
        self.epoch += 1
        self._resparsify()
        return [
            {
                "event": "state",
                "epoch": self.epoch,
                "cascade": result.status,
                "achieved": result.achieved,
            }
        ]

    def _cmd_setLock(self, command: dict) -> list[dict]:
        self._require_dataset()
        path = _parse_path(command.get("path"))
        locked = command.get("locked")
        if not isinstance(locked, bool):
            raise CommandError("'locked' must be a boolean", field="locked")
        try:
            entry = grouping.entry_at(self.roots, path)
        except HierarchyError as exc:
            raise CommandError(str(exc), field="path") from None
        entry.locked = locked
        return [{"event": "state", "epoch": self.epoch}]

    def _cmd_setSparsifyParams(self, command: dict) -> list[dict]:
        self._require_dataset()
        try:
            params = sparsify_mod.SparsifyParams(
                mode=command.get("mode", self.sparsify_params.mode),
                kappa_t=float(command.get("kappaT", self.sparsify_params.kappa_t)),
                kappa_s=float(command.get("kappaS", self.sparsify_params.kappa_s)),
                rng_seed=int(command.get("seed", self.sparsify_params.rng_seed)),
            )
        except (TypeError, ValueError) as exc:
            raise CommandError(str(exc), field="sparsify") from None
        self.sparsify_params = params
        self.epoch += 1
        self._resparsify()
        return [{"event": "state", "epoch": self.epoch, "sparsify": params.to_json()}]

    def _cmd_setBlendWeights(self, command: dict) -> list[dict]:
        try:
            self.weights = BlendWeights(
                w_color=float(command.get("wColor", self.weights.w_color)),
                w_transfer=float(command.get("wTransfer", self.weights.w_transfer)),
                w_alpha=float(command.get("wAlpha", self.weights.w_alpha)),
            )
        except (TypeError, ValueError) as exc:
            raise CommandError(str(exc), field="weights") from None
        return [{"event": "state", "epoch": self.epoch, "weights": self.weights.to_json()}]

    def _cmd_setRawTF(self, command: dict) -> list[dict]:
        points = command.get("points")
        try:
            self.raw_tf = RawTransferFunction.from_json(points)
        except (TypeError, KeyError, ValueError) as exc:
            raise CommandError(f"bad raw transfer function: {exc}", field="points") from None
        return [{"event": "state", "epoch": self.epoch}]

    def _cmd_setCamera(self, command: dict) -> list[dict]:
        try:
            self.camera = Camera(
                eye=tuple(float(v) for v in command["eye"]),
                target=tuple(float(v) for v in command["target"]),
                up=tuple(float(v) for v in command.get("up", (0.0, 0.0, 1.0))),
                fov_y_deg=float(command.get("fovY", 45.0)),
                width=int(command.get("width", self.camera.width if self.camera else 512)),
                height=int(command.get("height", self.camera.height if self.camera else 512)),
            )
        except (TypeError, KeyError, ValueError) as exc:
            raise CommandError(f"bad camera: {exc}", field="camera") from None
        return [{"event": "state", "epoch": self.epoch}]

    def _cmd_requestFrame(self, command: dict) -> list[dict]:
        frame, report = self.render()
        return [
            {
                "event": "frame",
                "epoch": frame.epoch,
                "cameraHash": frame.camera_hash,
                "png": frame_to_png_bytes(frame),
            },
            {"event": "report", "epoch": report.epoch, "payload": self._report_json(report)},
        ]

    def _cmd_requestAssessment(self, command: dict) -> list[dict]:
        report = self.assessment()
        return [
            {"event": "report", "epoch": report.epoch, "payload": self._report_json(report)}
        ]

    # -- state export ----------------------------------------------------------------

    def _dataset_json(self) -> dict | None:
        if self.raw is None:
            return None
        return {
            "dims": list(self.raw.dims.shape),
            "spacing": list(self.raw.dims.spacing),
            "instances": len(self.table),
            "attributes": [
                {"name": s.name, "kind": s.kind, "derived": s.derived}
                for s in self.table.schema.specs
            ],
        }

    def export_json(self) -> dict:
        """Reproducible session document: inputs, settings (seed included) and
        the current visible flags, which capture layered sparsification history
        that replaying the final ratios alone would not."""
        return {
            "descriptor": self.dataset_descriptor,
            "hierarchy": grouping.hierarchy_to_json(self.roots),
            "sparsify": self.sparsify_params.to_json(),
            "weights": self.weights.to_json(),
            "rawTF": self.raw_tf.to_json(),
            "camera": self.camera.to_json() if self.camera else None,
            "options": {
                "epsId": self.options.eps_id,
                "stepVoxels": self.options.step_voxels,
                "background": list(self.options.background),
                "shading": self.options.shading,
            },
            "visible": {str(i): bool(v) for i, v in self.table.visible.items()}
            if self.table is not None
            else {},
        }

    def import_json(self, doc: dict) -> None:
        """Restore an exported session (dataset must still be reachable)."""
        with self.lock:
            if doc.get("descriptor"):
                self._cmd_loadDataset({"cmd": "loadDataset", "descriptor": doc["descriptor"]})
            if doc.get("hierarchy") and doc["hierarchy"].get("roots"):
                self._cmd_setHierarchy({"cmd": "setHierarchy", "hierarchy": doc["hierarchy"]})
            if doc.get("sparsify"):
                sp = {k: v for k, v in doc["sparsify"].items() if v is not None}
                self._cmd_setSparsifyParams({"cmd": "setSparsifyParams", **sp})
            if doc.get("weights"):
                self._cmd_setBlendWeights({"cmd": "setBlendWeights", **doc["weights"]})
            if doc.get("rawTF"):
                self._cmd_setRawTF({"cmd": "setRawTF", "points": doc["rawTF"]})
            if doc.get("camera"):
                self._cmd_setCamera({"cmd": "setCamera", **doc["camera"]})
            opts = doc.get("options", {})
            self.options = replace(
                self.options,
                eps_id=float(opts.get("epsId", self.options.eps_id)),
                step_voxels=float(opts.get("stepVoxels", self.options.step_voxels)),
                background=tuple(opts.get("background", self.options.background)),
                shading=bool(opts.get("shading", self.options.shading)),
            )
            visible = doc.get("visible")
            if visible and self.table is not None:
                for key, value in visible.items():
                    iid = int(key)
                    if iid in self.table.visible:
                        self.table.visible[iid] = bool(value)
                self.epoch += 1  # restored flags invalidate any cached mask

    def state_json(self) -> dict:
        groups = []
        counts = self.assignment.counts()
        for pred in self.preds:
            k = pred.group_index
            groups.append(
                {
                    "index": k,
                    "pathKey": pred.path_key,
                    "path": [list(p) for p in pred.path],
                    "color": list(pred.color),
                    "fraction": pred.visible_fraction,
                    "count": counts.get(k, 0),
                    "hidden": sum(
                        1
                        for i, g in self.assignment.group_of.items()
                        if g == k and not self.table.visible[i]
                    )
                    if self.table is not None
                    else 0,
                }
            )
        return {
            "epoch": self.epoch,
            "dataset": self._dataset_json(),
            "hierarchy": grouping.hierarchy_to_json(self.roots),
            "groups": groups,
            "sparsify": self.sparsify_params.to_json(),
            "weights": self.weights.to_json(),
            "rawTF": self.raw_tf.to_json(),
            "camera": self.camera.to_json() if self.camera else None,
            "lastReport": self.last_report.to_json() if self.last_report else None,
        }


# -- HTTP + WebSocket front ----------------------------------------------------------


def _event_wire(event: dict) -> dict:
    """JSON-safe copy of an event (frames carry base64 over HTTP)."""
    out = {k: v for k, v in event.items() if k != "png"}
    if "png" in event:
        out["pngBase64"] = base64.b64encode(event["png"]).decode("ascii")
    return out


def create_app() -> FastAPI:
    app = FastAPI(title="crowdvis")
    sessions: dict[str, Session] = {}
    streams: dict[str, list[asyncio.Queue]] = {}

    # Serve the browser UI when running from a checkout with frontend/ present.
    frontend_dir = Path(__file__).resolve().parents[2] / "frontend"
    if (frontend_dir / "index.html").is_file():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=frontend_dir, html=True), name="ui")

    def get_session(sid: str) -> Session:
        if sid not in sessions:
            raise HTTPException(status_code=404, detail=f"no session {sid}")
        return sessions[sid]

    @app.post("/session")
    async def create_session(body: dict | None = None):
        sid = uuid.uuid4().hex[:12]
        session = Session()
        sessions[sid] = session
        streams[sid] = []
        try:
            if body and body.get("descriptor"):
                await run_in_threadpool(
                    session.apply, {"cmd": "loadDataset", "descriptor": body["descriptor"]}
                )
            if body and body.get("import"):
                await run_in_threadpool(session.import_json, body["import"])
        except CommandError as exc:
            del sessions[sid], streams[sid]
            raise HTTPException(status_code=400, detail=str(exc)) from None
        return {"id": sid, "epoch": session.epoch}

    @app.get("/session/{sid}/export")
    async def export_session(sid: str):
        session = get_session(sid)
        with session.lock:
            return session.export_json()

    @app.post("/session/{sid}/command")
    async def post_command(sid: str, command: dict):
        session = get_session(sid)
        try:
            events = await run_in_threadpool(session.apply, command)
        except CommandError as exc:
            err = {"event": "error", "epoch": session.epoch, "message": str(exc), "field": exc.field}
            for q in streams.get(sid, []):
                q.put_nowait(err)
            return JSONResponse(status_code=400, content={"error": err})
        for q in streams.get(sid, []):
            for event in events:
                q.put_nowait(event)
        return {"epoch": session.epoch, "events": [_event_wire(e) for e in events]}

    @app.get("/session/{sid}/state")
    async def get_state(sid: str):
        session = get_session(sid)
        with session.lock:
            return session.state_json()

    @app.get("/session/{sid}/frame.png")
    async def get_frame(sid: str):
        session = get_session(sid)

        def _render() -> bytes:
            with session.lock:
                frame, _ = session.render()
                return frame_to_png_bytes(frame)

        try:
            png = await run_in_threadpool(_render)
        except CommandError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        return Response(content=png, media_type="image/png")

    @app.websocket("/session/{sid}/stream")
    async def stream(websocket: WebSocket, sid: str):
        await websocket.accept()
        if sid not in sessions:
            await websocket.close(code=4004)
            return
        queue: asyncio.Queue = asyncio.Queue()
        streams[sid].append(queue)
        try:
            while True:
                event = await queue.get()
                envelope = {k: v for k, v in event.items() if k != "png"}
                envelope["binary"] = "png" in event
                await websocket.send_json(envelope)
                if "png" in event:
                    await websocket.send_bytes(event["png"])
        except WebSocketDisconnect:
            pass
        finally:
            if queue in streams.get(sid, []):
                streams[sid].remove(queue)

    return app
