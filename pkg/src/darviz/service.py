"""HTTP facade over validation, shapes, codegen, import, traces, zoo,
and design persistence.

Status mapping: 200 success, 404 unknown resource, 422 semantic
rejection (the body is well-formed JSON but names an invalid model,
trace, or conversion), 400 malformed request body. Compute endpoints
are pure functions of the request body and share no mutable state, so
identical concurrent requests produce byte-identical responses.

Configuration: DARVIZ_PORT and DARVIZ_STORE environment variables (the
CLI's flags override them).
"""

from __future__ import annotations

import dataclasses
import os
import tempfile
from dataclasses import fields as dataclass_fields

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import ir, linting, shapes as shape_engine, store as store_mod, traces, zoo
from .backends import codegen
from .frontends import FrontendError, import_caffe, import_keras_json


class _HttpError(Exception):
    def __init__(self, status: int, detail):
        self.status = status
        self.detail = detail


def _bad_request(detail) -> _HttpError:
    return _HttpError(400, detail)


def _rejected(detail) -> _HttpError:
    return _HttpError(422, detail)


async def _json_body(request: Request) -> dict:
    try:
        body = await request.json()
    except Exception:
        raise _bad_request("request body is not valid JSON") from None
    if not isinstance(body, dict):
        raise _bad_request("request body must be a JSON object")
    return body


def _model_from(body: dict, key: str = "model") -> ir.Model:
    if key not in body:
        raise _bad_request(f"missing {key!r} field")
    try:
        return ir.document_to_model(body[key])
    except ir.IrError as exc:
        raise _rejected(str(exc)) from None


def _diagnose(model: ir.Model) -> list[linting.Diagnostic]:
    bindings = ir.input_bindings_from_metadata(model)
    inferred, _ = shape_engine.infer_shapes_partial(model, bindings)
    return linting.lint(model, inferred)


ARITY = {"Input": "none", "Concat": "many", "Add": "many"}


def _catalog() -> list[dict]:
    out = []
    for kind in ir.LAYER_KINDS:
        cls = ir.PARAMS_BY_KIND[kind]
        params = []
        for f in dataclass_fields(cls):
            entry: dict = {"name": f.name, "type": str(f.type)}
            if f.default is not dataclasses.MISSING:
                entry["default"] = list(f.default) if isinstance(f.default, tuple) else f.default
            params.append(entry)
        out.append({"kind": kind, "params": params, "arity": ARITY.get(kind, "one")})
    return out


def create_app(store_dir: str | None = None, ui_dir: str | None = None) -> FastAPI:
    store_dir = (
        store_dir
        or os.environ.get("DARVIZ_STORE")
        or os.path.join(tempfile.gettempdir(), "darviz-store")
    )
    design_store = store_mod.DesignStore(store_dir)

    app = FastAPI(title="model designer service", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(_HttpError)
    async def handle_http_error(request, exc: _HttpError):
        return JSONResponse(status_code=exc.status, content={"detail": exc.detail})

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(request, exc):
        return JSONResponse(status_code=400, content={"detail": "malformed request"})

    @app.get("/api/zoo")
    def list_zoo():
        return [
            {
                "name": e.name,
                "description": e.description,
                "input_shape": e.input_shape,
                "layers": len(e.model.layers),
            }
            for e in zoo.zoo_list()
        ]

    @app.get("/api/zoo/{name}")
    def get_zoo(name: str):
        try:
            model = zoo.zoo_get(name)
        except zoo.NotFound as exc:
            raise _HttpError(404, str(exc)) from None
        return ir.model_to_document(model)

    @app.get("/api/catalog")
    def get_catalog():
        return {"kinds": _catalog()}

    @app.post("/api/validate")
    async def validate(request: Request):
        body = await _json_body(request)
        model = _model_from(body)
        diagnostics = _diagnose(model)
        return {"diagnostics": [d.to_dict() for d in diagnostics]}

    @app.post("/api/shapes")
    async def shapes_endpoint(request: Request):
        body = await _json_body(request)
        model = _model_from(body)
        bindings = dict(ir.input_bindings_from_metadata(model))
        inputs = body.get("inputs", {})
        if not isinstance(inputs, dict):
            raise _bad_request("'inputs' must map layer ids to shape arrays")
        for lid, dims in inputs.items():
            if not (isinstance(dims, list) and all(isinstance(d, int) for d in dims)):
                raise _bad_request(f"input shape for {lid!r} must be an array of ints")
            try:
                bindings[lid] = ir.TensorShape(tuple(dims))
            except ir.IrError as exc:
                raise _rejected(str(exc)) from None
        try:
            inferred = shape_engine.infer_shapes(model, bindings)
        except ir.CycleDetected as exc:
            raise _rejected(str(exc)) from None
        except shape_engine.ShapeError as exc:
            raise _rejected({"message": str(exc), "layer": exc.layer_id}) from None
        return {"shapes": {lid: list(s.dims) for lid, s in sorted(inferred.items())}}

    @app.post("/api/codegen")
    async def codegen_endpoint(request: Request):
        body = await _json_body(request)
        model = _model_from(body)
        target = body.get("target")
        if not isinstance(target, str):
            raise _bad_request("missing 'target' field")
        try:
            if target == "keras-config":
                artifact = codegen.export_keras_config(model)
            else:
                artifact = codegen.emit(model, target)
        except codegen.LintErrorsPresent as exc:
            raise _rejected(
                {
                    "message": "lint errors present",
                    "diagnostics": [d.to_dict() for d in exc.diagnostics],
                }
            ) from None
        except codegen.CodegenError as exc:
            raise _rejected(str(exc)) from None
        return {"target": artifact.target, "filename": artifact.filename, "source": artifact.text}

    @app.post("/api/import")
    async def import_endpoint(request: Request):
        body = await _json_body(request)
        fmt = body.get("format")
        text = body.get("text")
        if fmt not in ("caffe", "keras"):
            raise _bad_request("'format' must be 'caffe' or 'keras'")
        if not isinstance(text, str):
            raise _bad_request("missing 'text' field")
        try:
            report = import_caffe(text) if fmt == "caffe" else import_keras_json(text)
        except FrontendError as exc:
            raise _rejected(str(exc)) from None
        return {"model": ir.model_to_document(report.model), "notes": list(report.notes)}

    @app.post("/api/lint-trace")
    async def lint_trace_endpoint(request: Request):
        body = await _json_body(request)
        fmt = body.get("format", "csv")
        text = body.get("text")
        if not isinstance(text, str):
            raise _bad_request("missing 'text' field")
        if fmt not in ("csv", "jsonl", "jsonlines"):
            raise _bad_request("'format' must be 'csv' or 'jsonlines'")
        config = traces.DetectorConfig()
        raw_cfg = body.get("config")
        if raw_cfg is not None:
            if not isinstance(raw_cfg, dict):
                raise _bad_request("'config' must be an object")
            allowed = {f.name for f in dataclass_fields(traces.DetectorConfig)}
            unknown = set(raw_cfg) - allowed
            if unknown:
                raise _bad_request(f"unknown config keys: {sorted(unknown)}")
            try:
                config = traces.DetectorConfig(**raw_cfg)
            except TypeError as exc:
                raise _bad_request(str(exc)) from None
        try:
            trace = traces.parse_trace(text, fmt)
        except traces.TraceError as exc:
            raise _rejected(str(exc)) from None
        findings = traces.lint_trace(trace, config)
        return {"findings": [f.to_dict() for f in findings]}

    @app.post("/api/designs")
    async def create_design(request: Request):
        document = await _json_body(request)
        try:
            record = design_store.save(document)
        except ir.IrError as exc:
            raise _rejected(str(exc)) from None
        except store_mod.StoreError as exc:
            raise _HttpError(500, str(exc)) from None
        return record.to_dict()

    @app.get("/api/designs/{design_id}")
    def get_design(design_id: str):
        try:
            return design_store.load(design_id).to_dict()
        except (store_mod.NotFound, store_mod.BadDesignId) as exc:
            raise _HttpError(404, str(exc)) from None

    @app.put("/api/designs/{design_id}")
    async def put_design(design_id: str, request: Request):
        document = await _json_body(request)
        try:
            record = design_store.save(document, design_id)
        except ir.IrError as exc:
            raise _rejected(str(exc)) from None
        except store_mod.BadDesignId as exc:
            raise _rejected(str(exc)) from None
        except store_mod.StoreError as exc:
            raise _HttpError(500, str(exc)) from None
        return record.to_dict()

    @app.delete("/api/designs/{design_id}")
    def delete_design(design_id: str):
        try:
            design_store.delete(design_id)
        except (store_mod.NotFound, store_mod.BadDesignId) as exc:
            raise _HttpError(404, str(exc)) from None
        return {"deleted": design_id}

    if ui_dir is None:
        ui_dir = os.environ.get("DARVIZ_UI")
    if ui_dir and os.path.isdir(ui_dir):
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def default_port() -> int:
    return int(os.environ.get("DARVIZ_PORT", "8000"))
