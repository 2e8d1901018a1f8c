"""Source-code emission from the IR.

Three targets: TF/Keras builder source, a Torch nn.Module, and a
prototxt network definition. Emission is template-based string
construction, byte-deterministic for a given (model, target): layers
are walked in topological order with lexicographic tiebreaks and every
formatting choice is fixed.

A model must lint clean of errors before emission, and every Input
layer needs a recorded shape (input_shape metadata, as written by the
importers and the zoo) because the targets need concrete extents for
constructors and input declarations.
"""

from __future__ import annotations

import enum
import json
import keyword
import re
from dataclasses import dataclass

from .. import ir, linting, shapes as shape_engine
from ..ir import Model


class CodegenTarget(enum.Enum):
    """Closed set of emission targets."""

    TENSORFLOW_KERAS_SOURCE = "keras"
    TORCH_MODULE_SOURCE = "torch"
    CAFFE_PROTOTXT = "caffe"


class CodegenError(Exception):
    pass


class LintErrorsPresent(CodegenError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(linting.render_diagnostic(d) for d in self.diagnostics)
        super().__init__(f"model has lint errors: {lines}")


class UnrepresentableConstruct(CodegenError):
    def __init__(self, target: str, layer_id: str, reason: str):
        self.target = target
        self.layer_id = layer_id
        self.reason = reason
        super().__init__(f"{target}: layer {layer_id!r}: {reason}")


@dataclass(frozen=True)
class SourceArtifact:
    target: str
    filename: str
    text: str

    @property
    def line_count(self) -> int:
        return self.text.count("\n")


def _quote(s: str) -> str:
    return json.dumps(s)


def _file_stem(name: str) -> str:
    stem = re.sub(r"[^A-Za-z0-9_.-]", "_", name)
    return stem or "model"


def _identifiers(order: list[str]) -> dict[str, str]:
    """Layer id -> unique valid Python identifier."""
    out: dict[str, str] = {}
    used: set[str] = set()
    for lid in order:
        ident = re.sub(r"[^0-9A-Za-z_]", "_", lid)
        if not ident or ident[0].isdigit():
            ident = "l_" + ident
        if keyword.iskeyword(ident):
            ident += "_"
        base, n = ident, 2
        while ident in used:
            ident = f"{base}_{n}"
            n += 1
        used.add(ident)
        out[lid] = ident
    return out


def _class_name(name: str) -> str:
    parts = re.split(r"[^0-9A-Za-z]+", name)
    camel = "".join(p[:1].upper() + p[1:] for p in parts if p)
    if not camel:
        camel = "Model"
    if camel[0].isdigit():
        camel = "Model" + camel
    return camel


def _prepare(model: Model, target: str):
    """Shared gate: lint clean, inputs bound, shapes inferable."""
    bindings = ir.input_bindings_from_metadata(model)
    partial, _ = shape_engine.infer_shapes_partial(model, bindings)
    diagnostics = linting.lint(model, partial)
    errors = [d for d in diagnostics if d.severity == "error"]
    if errors:
        raise LintErrorsPresent(errors)
    for lid in model.input_ids():
        if lid not in bindings:
            raise UnrepresentableConstruct(
                target, lid, "input shape unknown; record input_shape metadata"
            )
    try:
        inferred = shape_engine.infer_shapes(model, bindings)
    except shape_engine.ShapeError as exc:
        raise UnrepresentableConstruct(
            target, getattr(exc, "layer_id", "") or "?", str(exc)
        ) from None
    order = ir.topo_order(model)
    return order, inferred


def _fusion_plan(model: Model) -> dict[str, str]:
    """Conv2D/Dense id -> Activation id for pairs safe to re-fuse.

    Safe means the producer's only consumer is the activation, so no
    other layer observes the pre-activation tensor.
    """
    by_id = model.layer_map()
    fused: dict[str, str] = {}
    for lyr in model.layers:
        if lyr.kind not in ("Conv2D", "Dense"):
            continue
        succs = model.successors(lyr.id)
        if len(succs) == 1 and by_id[succs[0]].kind == "Activation":
            fused[lyr.id] = succs[0]
    return fused


# ---------------------------------------------------------------------------
# TF/Keras source


def _keras_padding(target: str, lid: str, kernel, pad) -> str:
    kh, kw = kernel
    if pad == (0, 0):
        return "valid"
    if kh % 2 == 1 and kw % 2 == 1 and pad == ((kh - 1) // 2, (kw - 1) // 2):
        return "same"
    raise UnrepresentableConstruct(
        target, lid, f"padding {pad} is neither valid nor same for kernel {kh}x{kw}"
    )


def _emit_keras(model: Model, order, inferred) -> str:
    target = CodegenTarget.TENSORFLOW_KERAS_SOURCE.value
    by_id = model.layer_map()
    idents = _identifiers(order)
    fused = _fusion_plan(model)
    fused_acts = set(fused.values())

    lines = [
        "import tensorflow as tf",
        "from tensorflow.keras import layers",
        "",
        "",
        "def build_model() -> tf.keras.Model:",
    ]

    for lid in order:
        lyr = by_id[lid]
        kind = lyr.kind
        if lid in fused_acts:
            continue
        preds = model.predecessors(lid)
        args = [idents[p] for p in preds]
        x = args[0] if args else ""
        var = idents[lid]

        if kind == "Input":
            dims = ", ".join(str(d) for d in inferred[lid].dims)
            if inferred[lid].rank == 1:
                dims += ","
            lines.append(f"    {var} = layers.Input(shape=({dims}), name={_quote(lid)})")
            continue
        if kind == "Conv2D":
            p = lyr.params
            if p.rounding != "floor":
                raise UnrepresentableConstruct(target, lid, "ceil rounding on convolution")
            padding = _keras_padding(target, lid, p.kernel, p.pad)
            activation = ""
            if lid in fused:
                act = by_id[fused[lid]]
                var = idents[act.id]
                activation = f", activation={_quote(act.params.fn)}"
            lines.append(
                f"    {var} = layers.Conv2D({p.filters}, ({p.kernel[0]}, {p.kernel[1]}), "
                f"strides=({p.stride[0]}, {p.stride[1]}), padding={_quote(padding)}"
                f"{activation}, name={_quote(lid)})({x})"
            )
            continue
        if kind in ("MaxPool2D", "AvgPool2D"):
            p = lyr.params
            ctor = "MaxPooling2D" if kind == "MaxPool2D" else "AveragePooling2D"
            padding = _keras_padding(target, lid, p.kernel, p.pad)
            comment = ""
            if p.rounding == "ceil":
                comment = "  # ceil rounding in the source model; this framework floors"
            lines.append(
                f"    {var} = layers.{ctor}(pool_size=({p.kernel[0]}, {p.kernel[1]}), "
                f"strides=({p.stride[0]}, {p.stride[1]}), padding={_quote(padding)}, "
                f"name={_quote(lid)})({x}){comment}"
            )
            continue
        if kind == "Dense":
            activation = ""
            if lid in fused:
                act = by_id[fused[lid]]
                var = idents[act.id]
                activation = f", activation={_quote(act.params.fn)}"
            lines.append(
                f"    {var} = layers.Dense({lyr.params.units}{activation}, "
                f"name={_quote(lid)})({x})"
            )
            continue
        if kind == "Flatten":
            lines.append(f"    {var} = layers.Flatten(name={_quote(lid)})({x})")
            continue
        if kind == "Dropout":
            lines.append(
                f"    {var} = layers.Dropout({lyr.params.rate:g}, name={_quote(lid)})({x})"
            )
            continue
        if kind == "BatchNorm":
            lines.append(f"    {var} = layers.BatchNormalization(name={_quote(lid)})({x})")
            continue
        if kind == "Activation":
            lines.append(
                f"    {var} = layers.Activation({_quote(lyr.params.fn)}, "
                f"name={_quote(lid)})({x})"
            )
            continue
        if kind == "Softmax":
            lines.append(f"    {var} = layers.Softmax(name={_quote(lid)})({x})")
            continue
        if kind == "Concat":
            lines.append(
                f"    {var} = layers.Concatenate(name={_quote(lid)})([{', '.join(args)}])"
            )
            continue
        if kind == "Add":
            lines.append(f"    {var} = layers.Add(name={_quote(lid)})([{', '.join(args)}])")
            continue
        raise UnrepresentableConstruct(target, lid, f"no emission rule for kind {kind}")

    # a fused activation's variable was assigned on its producer's line,
    # so terminal ids resolve even when the terminal is a fused activation
    input_vars = [idents[lid] for lid in model.input_ids()]
    terminal_vars = [idents[lid] for lid in model.terminal_ids()]
    inputs = input_vars[0] if len(input_vars) == 1 else "[" + ", ".join(input_vars) + "]"
    outputs = terminal_vars[0] if len(terminal_vars) == 1 else "[" + ", ".join(terminal_vars) + "]"
    lines.append(
        f"    return tf.keras.Model(inputs={inputs}, outputs={outputs}, "
        f"name={_quote(model.name)})"
    )
    lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Torch source


_TORCH_FNS = {"relu": "torch.relu", "sigmoid": "torch.sigmoid", "tanh": "torch.tanh"}


def _torch_activation(var: str, x: str, fn: str) -> str:
    if fn == "softmax":
        return f"        {var} = torch.softmax({x}, dim=1)"
    return f"        {var} = {_TORCH_FNS[fn]}({x})"


def _emit_torch(model: Model, order, inferred) -> str:
    target = CodegenTarget.TORCH_MODULE_SOURCE.value
    by_id = model.layer_map()
    idents = _identifiers(order)

    ctor_lines: list[str] = []
    fwd_lines: list[str] = []

    for lid in order:
        lyr = by_id[lid]
        kind = lyr.kind
        preds = model.predecessors(lid)
        args = [idents[p] for p in preds]
        x = args[0] if args else ""
        var = idents[lid]

        if kind == "Input":
            continue
        if kind == "Conv2D":
            p = lyr.params
            if p.rounding != "floor":
                raise UnrepresentableConstruct(target, lid, "ceil rounding on convolution")
            cin = inferred[preds[0]].channels
            ctor_lines.append(
                f"        self.{var} = nn.Conv2d({cin}, {p.filters}, "
                f"kernel_size=({p.kernel[0]}, {p.kernel[1]}), "
                f"stride=({p.stride[0]}, {p.stride[1]}), "
                f"padding=({p.pad[0]}, {p.pad[1]}))"
            )
            fwd_lines.append(f"        {var} = self.{var}({x})")
            continue
        if kind in ("MaxPool2D", "AvgPool2D"):
            p = lyr.params
            ctor = "MaxPool2d" if kind == "MaxPool2D" else "AvgPool2d"
            ceil = "True" if p.rounding == "ceil" else "False"
            ctor_lines.append(
                f"        self.{var} = nn.{ctor}(kernel_size=({p.kernel[0]}, {p.kernel[1]}), "
                f"stride=({p.stride[0]}, {p.stride[1]}), padding=({p.pad[0]}, {p.pad[1]}), "
                f"ceil_mode={ceil})"
            )
            fwd_lines.append(f"        {var} = self.{var}({x})")
            continue
        if kind == "Dense":
            fin = inferred[preds[0]].dims[0]
            ctor_lines.append(f"        self.{var} = nn.Linear({fin}, {lyr.params.units})")
            fwd_lines.append(f"        {var} = self.{var}({x})")
            continue
        if kind == "BatchNorm":
            shape = inferred[preds[0]]
            if shape.rank == 3:
                ctor_lines.append(f"        self.{var} = nn.BatchNorm2d({shape.channels})")
            else:
                ctor_lines.append(f"        self.{var} = nn.BatchNorm1d({shape.dims[0]})")
            fwd_lines.append(f"        {var} = self.{var}({x})")
            continue
        if kind == "Dropout":
            ctor_lines.append(f"        self.{var} = nn.Dropout(p={lyr.params.rate:g})")
            fwd_lines.append(f"        {var} = self.{var}({x})")
            continue
        if kind == "Activation":
            fwd_lines.append(_torch_activation(var, x, lyr.params.fn))
            continue
        if kind == "Softmax":
            fwd_lines.append(f"        {var} = torch.softmax({x}, dim=1)")
            continue
        if kind == "Flatten":
            fwd_lines.append(f"        {var} = torch.flatten({x}, 1)")
            continue
        if kind == "Concat":
            fwd_lines.append(f"        {var} = torch.cat([{', '.join(args)}], dim=1)")
            continue
        if kind == "Add":
            fwd_lines.append(f"        {var} = {' + '.join(args)}")
            continue
        raise UnrepresentableConstruct(target, lid, f"no emission rule for kind {kind}")

    input_args = ", ".join(idents[lid] for lid in model.input_ids())
    terminals = ", ".join(idents[lid] for lid in model.terminal_ids())

    lines = [
        "import torch",
        "from torch import nn",
        "",
        "",
        f"class {_class_name(model.name)}(nn.Module):",
        '    """Expects channel-first (N, C, H, W) input tensors."""',
        "",
        "    def __init__(self):",
        "        super().__init__()",
    ]
    lines.extend(ctor_lines or ["        pass"])
    lines.append("")
    lines.append(f"    def forward(self, {input_args}):")
    lines.extend(fwd_lines)
    lines.append(f"        return {terminals}")
    lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Prototxt


def _proto_pair(lines: list[str], indent: str, base: str, value: tuple[int, int], default: int):
    """Emit kernel/stride/pad fields, splitting into _h/_w when non-square."""
    h, w = value
    name = "kernel_size" if base == "kernel" else base
    if h == w:
        if h != default or base == "kernel":
            lines.append(f"{indent}{name}: {h}")
    else:
        lines.append(f"{indent}{base}_h: {h}")
        lines.append(f"{indent}{base}_w: {w}")


def _emit_caffe(model: Model, order, inferred) -> str:
    target = CodegenTarget.CAFFE_PROTOTXT.value
    by_id = model.layer_map()

    # In-place emission: an Activation/Dropout whose producer feeds only
    # it reuses the producer's blob, matching the framework's idiom.
    blob: dict[str, str] = {}
    for lid in order:
        lyr = by_id[lid]
        preds = model.predecessors(lid)
        if (
            lyr.kind in ("Activation", "Dropout")
            and len(preds) == 1
            and len(model.successors(preds[0])) == 1
        ):
            blob[lid] = blob[preds[0]]
        else:
            blob[lid] = lid

    lines = [f"name: {_quote(model.name)}"]
    for lid in order:
        lyr = by_id[lid]
        kind = lyr.kind
        preds = model.predecessors(lid)
        body: list[str] = [f"  name: {_quote(lid)}"]

        if kind == "Input":
            body.append('  type: "Input"')
        elif kind == "Conv2D":
            p = lyr.params
            if p.rounding != "floor":
                raise UnrepresentableConstruct(target, lid, "ceil rounding on convolution")
            body.append('  type: "Convolution"')
        elif kind in ("MaxPool2D", "AvgPool2D"):
            body.append('  type: "Pooling"')
        elif kind == "Dense":
            body.append('  type: "InnerProduct"')
        elif kind == "Activation":
            proto_type = {"relu": "ReLU", "sigmoid": "Sigmoid", "tanh": "TanH",
                          "softmax": "Softmax"}[lyr.params.fn]
            body.append(f'  type: "{proto_type}"')
        elif kind == "Softmax":
            body.append('  type: "Softmax"')
        elif kind == "Dropout":
            body.append('  type: "Dropout"')
        elif kind == "Flatten":
            body.append('  type: "Flatten"')
        elif kind == "BatchNorm":
            body.append('  type: "BatchNorm"')
        elif kind == "Concat":
            body.append('  type: "Concat"')
        elif kind == "Add":
            body.append('  type: "Eltwise"')
        else:
            raise UnrepresentableConstruct(target, lid, f"no emission rule for kind {kind}")

        for p in preds:
            body.append(f"  bottom: {_quote(blob[p])}")
        body.append(f"  top: {_quote(blob[lid])}")

        if kind == "Input":
            dims = inferred[lid].dims
            proto_dims = [1, dims[2], dims[0], dims[1]] if len(dims) == 3 else [1, dims[0]]
            body.append("  input_param {")
            body.append("    shape {")
            for d in proto_dims:
                body.append(f"      dim: {d}")
            body.append("    }")
            body.append("  }")
        elif kind == "Conv2D":
            p = lyr.params
            body.append("  convolution_param {")
            body.append(f"    num_output: {p.filters}")
            _proto_pair(body, "    ", "kernel", p.kernel, 1)
            _proto_pair(body, "    ", "stride", p.stride, 1)
            _proto_pair(body, "    ", "pad", p.pad, 0)
            body.append("  }")
        elif kind in ("MaxPool2D", "AvgPool2D"):
            p = lyr.params
            body.append("  pooling_param {")
            body.append(f"    pool: {'MAX' if kind == 'MaxPool2D' else 'AVE'}")
            _proto_pair(body, "    ", "kernel", p.kernel, 1)
            _proto_pair(body, "    ", "stride", p.stride, 1)
            _proto_pair(body, "    ", "pad", p.pad, 0)
            if p.rounding == "floor":
                body.append("    round_mode: FLOOR")
            body.append("  }")
        elif kind == "Dense":
            body.append("  inner_product_param {")
            body.append(f"    num_output: {lyr.params.units}")
            body.append("  }")
        elif kind == "Dropout":
            body.append("  dropout_param {")
            body.append(f"    dropout_ratio: {lyr.params.rate:g}")
            body.append("  }")
        elif kind == "Concat":
            body.append("  concat_param {")
            body.append("    axis: 1")
            body.append("  }")
        elif kind == "Add":
            body.append("  eltwise_param {")
            body.append("    operation: SUM")
            body.append("  }")

        lines.append("layer {")
        lines.extend(body)
        lines.append("}")
    lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Entry points


def emit(model: Model, target: CodegenTarget | str) -> SourceArtifact:
    """Emit source text for a target; pure in (model, target).

    Raises LintErrorsPresent when the linter reports errors, and
    UnrepresentableConstruct for models the target cannot express
    (unbound input shapes, ceil-rounded convolutions, asymmetric
    padding on padding-keyword targets).
    """
    if isinstance(target, str):
        try:
            target = CodegenTarget(target)
        except ValueError:
            raise CodegenError(f"unknown codegen target {target!r}") from None
    order, inferred = _prepare(model, target.value)
    stem = _file_stem(model.name)
    if target is CodegenTarget.TENSORFLOW_KERAS_SOURCE:
        return SourceArtifact(target.value, f"{stem}.py", _emit_keras(model, order, inferred))
    if target is CodegenTarget.TORCH_MODULE_SOURCE:
        return SourceArtifact(target.value, f"{stem}_torch.py", _emit_torch(model, order, inferred))
    return SourceArtifact(target.value, f"{stem}.prototxt", _emit_caffe(model, order, inferred))


def export_keras_config(model: Model) -> SourceArtifact:
    """Render the model as a functional model-config JSON document.

    The JSON sibling of the Keras source target, used where a
    machine-importable form is needed (round-trips, tooling). Fused
    activations are re-fused under the same single-consumer condition.
    """
    target = "keras-config"
    order, inferred = _prepare(model, target)
    by_id = model.layer_map()
    bindings = ir.input_bindings_from_metadata(model)
    fused = _fusion_plan(model)
    fused_acts = {v: k for k, v in fused.items()}

    entries = []
    for lid in order:
        lyr = by_id[lid]
        kind = lyr.kind
        if lid in fused_acts:
            continue
        preds = model.predecessors(lid)

        if kind == "Input":
            config: dict = {"name": lid}
            if lid in bindings:
                config["batch_input_shape"] = [None, *bindings[lid].dims]
            cls = "InputLayer"
        elif kind == "Conv2D":
            p = lyr.params
            if p.rounding != "floor":
                raise UnrepresentableConstruct(target, lid, "ceil rounding on convolution")
            config = {
                "name": lid,
                "filters": p.filters,
                "kernel_size": list(p.kernel),
                "strides": list(p.stride),
                "padding": _keras_padding(target, lid, p.kernel, p.pad),
                "activation": by_id[fused[lid]].params.fn if lid in fused else "linear",
            }
            cls = "Conv2D"
        elif kind in ("MaxPool2D", "AvgPool2D"):
            p = lyr.params
            if p.rounding != "floor":
                raise UnrepresentableConstruct(target, lid, "ceil rounding on pooling")
            config = {
                "name": lid,
                "pool_size": list(p.kernel),
                "strides": list(p.stride),
                "padding": _keras_padding(target, lid, p.kernel, p.pad),
            }
            cls = "MaxPooling2D" if kind == "MaxPool2D" else "AveragePooling2D"
        elif kind == "Dense":
            config = {
                "name": lid,
                "units": lyr.params.units,
                "activation": by_id[fused[lid]].params.fn if lid in fused else "linear",
            }
            cls = "Dense"
        elif kind == "Flatten":
            config, cls = {"name": lid}, "Flatten"
        elif kind == "Dropout":
            config, cls = {"name": lid, "rate": lyr.params.rate}, "Dropout"
        elif kind == "BatchNorm":
            config, cls = {"name": lid}, "BatchNormalization"
        elif kind == "Activation":
            config, cls = {"name": lid, "activation": lyr.params.fn}, "Activation"
        elif kind == "Softmax":
            config, cls = {"name": lid, "axis": -1}, "Softmax"
        elif kind == "Concat":
            config, cls = {"name": lid, "axis": -1}, "Concatenate"
        elif kind == "Add":
            config, cls = {"name": lid}, "Add"
        else:
            raise UnrepresentableConstruct(target, lid, f"no emission rule for kind {kind}")

        inbound = []
        if preds:
            # a fused activation's output is carried by its producer's entry
            inbound = [[[fused_acts.get(p, p), 0, 0, {}] for p in preds]]
        entries.append(
            {"class_name": cls, "config": config, "name": lid, "inbound_nodes": inbound}
        )

    doc = {
        "class_name": "Functional",
        "config": {"name": model.name, "layers": entries},
    }
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    return SourceArtifact(target, f"{_file_stem(model.name)}_config.json", text)
