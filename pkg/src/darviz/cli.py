"""Command-line pipeline: import, validate, infer shapes, generate code,
convert end to end, browse the zoo, lint traces, and serve the HTTP API.

Exit codes: 0 success; 1 the linter (or trace detector) reported
errors; 2 usage errors or unreadable/unparseable input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

from . import ir, linting, shapes as shape_engine, traces, zoo
from .backends import codegen
from .frontends import FrontendError, import_caffe, import_keras_json

USAGE_ERROR = 2
LINT_ERROR = 1


class CliFailure(Exception):
    """Fatal CLI problem; message goes to stderr, carries the exit code."""

    def __init__(self, message: str, code: int = USAGE_ERROR):
        super().__init__(message)
        self.code = code


def _read_file(path: str, stage: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CliFailure(f"{stage}: cannot read {path}: {exc.strerror}") from None


def _write_atomic(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".darviz-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise CliFailure(f"cannot write {path}: {exc}") from None


def _emit_output(path: str | None, text: str):
    if path:
        _write_atomic(path, text)
    else:
        sys.stdout.write(text)


def _load_model(path: str) -> ir.Model:
    text = _read_file(path, "parse")
    try:
        return ir.parse_ir(text)
    except ir.IrError as exc:
        raise CliFailure(f"parse: {exc}") from None


def _import(fmt: str, text: str):
    try:
        if fmt == "caffe":
            return import_caffe(text)
        return import_keras_json(text)
    except FrontendError as exc:
        raise CliFailure(f"import: {exc}") from None


def _bindings(model: ir.Model, shape_arg: str | None) -> dict:
    bindings = dict(ir.input_bindings_from_metadata(model))
    if shape_arg:
        inputs = model.input_ids()
        if len(inputs) != 1:
            raise CliFailure(
                f"--input-shape needs exactly one Input layer, model has {len(inputs)}"
            )
        try:
            bindings[inputs[0]] = ir.parse_shape(shape_arg)
        except ir.IrError as exc:
            raise CliFailure(f"shapes: {exc}") from None
    return bindings


def _print_diagnostics(diagnostics, as_json: bool):
    if as_json:
        print(json.dumps({"diagnostics": [d.to_dict() for d in diagnostics]}, indent=2))
    else:
        for d in diagnostics:
            print(linting.render_diagnostic(d))


def _codegen(model: ir.Model, target: str) -> codegen.SourceArtifact:
    try:
        if target == "keras-config":
            return codegen.export_keras_config(model)
        return codegen.emit(model, target)
    except codegen.LintErrorsPresent as exc:
        for d in exc.diagnostics:
            print(linting.render_diagnostic(d))
        raise CliFailure("codegen: aborted, lint errors present", LINT_ERROR) from None
    except codegen.CodegenError as exc:
        raise CliFailure(f"codegen: {exc}") from None


# ---------------------------------------------------------------------------
# Subcommands


def cmd_import(args) -> int:
    report = _import(getattr(args, "from"), _read_file(args.input, "import"))
    text = ir.serialize_ir(report.model)
    if args.json:
        print(json.dumps(
            {"model": ir.model_to_document(report.model), "notes": list(report.notes)},
            indent=2,
        ))
        if args.output:
            _write_atomic(args.output, text)
        return 0
    _emit_output(args.output, text)
    for note in report.notes:
        print(f"note: {note}", file=sys.stderr)
    return 0


def cmd_validate(args) -> int:
    model = _load_model(args.file)
    bindings = _bindings(model, args.input_shape)
    inferred, _ = shape_engine.infer_shapes_partial(model, bindings)
    diagnostics = linting.lint(model, inferred)
    _print_diagnostics(diagnostics, args.json)
    return LINT_ERROR if linting.has_errors(diagnostics) else 0


def cmd_shapes(args) -> int:
    model = _load_model(args.file)
    bindings = _bindings(model, args.input_shape)
    try:
        inferred = shape_engine.infer_shapes(model, bindings)
    except (shape_engine.ShapeError, ir.CycleDetected) as exc:
        raise CliFailure(f"shapes: {exc}") from None
    if args.json:
        print(json.dumps(
            {"shapes": {lid: list(s.dims) for lid, s in sorted(inferred.items())}}, indent=2
        ))
        return 0
    for lid in ir.topo_order(model):
        if lid in inferred:
            print(f"{lid} {inferred[lid]}")
    return 0


def cmd_codegen(args) -> int:
    model = _load_model(args.file)
    artifact = _codegen(model, args.target)
    _emit_output(args.output, artifact.text)
    return 0


def cmd_convert(args) -> int:
    report = _import(getattr(args, "from"), _read_file(args.input, "import"))
    artifact = _codegen(report.model, args.to)
    _emit_output(args.output, artifact.text)
    return 0


def cmd_zoo(args) -> int:
    if args.action == "list":
        entries = zoo.zoo_list()
        if args.json:
            print(json.dumps(
                [
                    {
                        "name": e.name,
                        "description": e.description,
                        "input_shape": e.input_shape,
                        "layers": len(e.model.layers),
                    }
                    for e in entries
                ],
                indent=2,
            ))
        else:
            for e in entries:
                print(e.name)
        return 0
    try:
        model = zoo.zoo_get(args.name)
    except zoo.NotFound as exc:
        raise CliFailure(f"zoo: {exc}") from None
    _emit_output(args.output, ir.serialize_ir(model))
    return 0


def cmd_lint_trace(args) -> int:
    text = _read_file(args.file, "trace")
    try:
        trace = traces.parse_trace(text, args.format)
    except traces.TraceError as exc:
        raise CliFailure(f"trace: {exc}") from None
    findings = traces.lint_trace(trace)
    if args.json:
        print(json.dumps({"findings": [f.to_dict() for f in findings]}, indent=2))
    else:
        for f in findings:
            print(f"{f.rule_id} {f.severity} epoch={f.epoch} {f.message}")
    return LINT_ERROR if any(f.severity == "fatal" for f in findings) else 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app, default_port

    port = args.port if args.port is not None else default_port()
    app = create_app(store_dir=args.store)
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="darviz", description="Design, validate, and convert model architectures."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", help="convert a foreign format to the interchange format")
    p.add_argument("--from", choices=["caffe", "keras"], required=True)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_import)

    p = sub.add_parser("validate", help="lint a model document")
    p.add_argument("file")
    p.add_argument("--input-shape", help="bind the single Input layer, e.g. 224x224x3")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("shapes", help="infer activation shapes")
    p.add_argument("file")
    p.add_argument("--input-shape", help="bind the single Input layer, e.g. 224x224x3")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_shapes)

    p = sub.add_parser("codegen", help="emit source for a target framework")
    p.add_argument("file")
    p.add_argument(
        "--target", choices=["keras", "torch", "caffe", "keras-config"], required=True
    )
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_codegen)

    p = sub.add_parser("convert", help="import then emit in one step")
    p.add_argument("--from", choices=["caffe", "keras"], required=True)
    p.add_argument("--to", choices=["keras", "torch", "caffe", "keras-config"], required=True)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_convert)

    p = sub.add_parser("zoo", help="list or export built-in models")
    zoo_sub = p.add_subparsers(dest="action", required=True)
    pl = zoo_sub.add_parser("list")
    pl.add_argument("--json", action="store_true")
    pl.set_defaults(fn=cmd_zoo, action="list")
    pe = zoo_sub.add_parser("export")
    pe.add_argument("name")
    pe.add_argument("-o", "--output")
    pe.set_defaults(fn=cmd_zoo, action="export")

    p = sub.add_parser("lint-trace", help="scan a training trace for faults")
    p.add_argument("file")
    p.add_argument("--format", choices=["csv", "jsonl", "jsonlines"], default="csv")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_lint_trace)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--port", type=int)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--store", help="design persistence directory")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliFailure as exc:
        print(str(exc), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
