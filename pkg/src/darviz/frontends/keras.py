"""Importer for the JSON model-config format of the TF/Keras family.

Accepts both Sequential configs (implicit chain) and functional configs
(explicit inbound node lists). Fused activation strings on Conv2D and
Dense become separate Activation nodes, so one foreign layer may map to
two IR nodes; downstream references are rewired to the activation.
"""

from __future__ import annotations

import json

from .. import ir
from .common import (
    ImportReport,
    ImportSyntaxError,
    UnsupportedClass,
    UnsupportedPadding,
    sanitize_id,
)

_FUSABLE = ("linear",) + ir.ACTIVATION_FNS


def _pair(value, what: str) -> tuple[int, int]:
    if isinstance(value, int):
        return (value, value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return (int(value[0]), int(value[1]))
    raise ImportSyntaxError(0, f"int or [h, w] for {what}")


def _same_pad(kernel: tuple[int, int]) -> tuple[int, int]:
    # exact only for odd kernels; even ones need asymmetric padding
    kh, kw = kernel
    if kh % 2 == 0 or kw % 2 == 0:
        raise UnsupportedPadding(f'"same" with even kernel {kh}x{kw}')
    return ((kh - 1) // 2, (kw - 1) // 2)


def _resolve_pad(config: dict, kernel: tuple[int, int]) -> tuple[int, int]:
    padding = config.get("padding", "valid")
    if padding == "valid":
        return (0, 0)
    if padding == "same":
        return _same_pad(kernel)
    raise UnsupportedPadding(repr(padding))


def _check_channels_last(config: dict, class_name: str):
    fmt = config.get("data_format")
    if fmt not in (None, "channels_last"):
        raise UnsupportedClass(f"{class_name}(data_format={fmt})")


def _input_shape_of(config: dict) -> ir.TensorShape | None:
    dims = config.get("batch_input_shape") or config.get("batch_shape")
    if not dims:
        return None
    body = [int(d) for d in dims[1:] if d is not None]
    if len(body) in (1, 3):
        return ir.TensorShape(tuple(body))
    return None


class _Builder:
    def __init__(self):
        self.taken: set[str] = set()
        self.layers: list[ir.Layer] = []
        self.edges: list[tuple[str, str]] = []
        self.metadata: dict[str, str] = {}
        self.notes: list[str] = []
        # foreign layer name -> IR node carrying that layer's output
        self.alias: dict[str, str] = {}

    def add(self, raw_name: str, kind: str, params, shape: ir.TensorShape | None = None) -> str:
        lid = sanitize_id(raw_name, self.taken)
        self.layers.append(ir.Layer(lid, kind, params, name=raw_name if raw_name != lid else ""))
        if shape is not None:
            self.metadata[f"{ir.INPUT_SHAPE_KEY}.{lid}"] = str(shape)
        return lid

    def fuse_activation(self, config: dict, raw_name: str, node: str) -> str:
        """Materialize a fused activation string; returns the output node."""
        fn = config.get("activation", "linear")
        if fn == "linear":
            return node
        if fn not in ir.ACTIVATION_FNS:
            raise UnsupportedClass(f"activation {fn!r}")
        act = self.add(f"{raw_name}_act", "Activation", ir.ActivationParams(fn=fn))
        self.edges.append((node, act))
        return act

    def map_layer(self, class_name: str, config: dict, raw_name: str) -> str:
        """Create IR node(s) for one foreign layer; returns its output node."""
        if class_name == "InputLayer":
            name = config.get("name", raw_name) or raw_name
            return self.add(name, "Input", ir.EmptyParams(), shape=_input_shape_of(config))

        if class_name == "Conv2D":
            _check_channels_last(config, class_name)
            dilation = config.get("dilation_rate", 1)
            if _pair(dilation, "dilation_rate") != (1, 1):
                raise UnsupportedClass("Conv2D(dilation_rate)")
            kernel = _pair(config["kernel_size"], "kernel_size")
            params = ir.Conv2DParams(
                filters=int(config["filters"]),
                kernel=kernel,
                stride=_pair(config.get("strides", 1), "strides"),
                pad=_resolve_pad(config, kernel),
                rounding="floor",
            )
            if config.get("use_bias") is False:
                self.notes.append(f"use_bias=false on {raw_name!r} not representable; assumed true")
            node = self.add(raw_name, "Conv2D", params)
            return self.fuse_activation(config, raw_name, node)

        if class_name in ("MaxPooling2D", "AveragePooling2D"):
            _check_channels_last(config, class_name)
            kernel = _pair(config.get("pool_size", 2), "pool_size")
            strides = config.get("strides")
            params = ir.PoolParams(
                kernel=kernel,
                stride=kernel if strides is None else _pair(strides, "strides"),
                pad=_resolve_pad(config, kernel),
                rounding="floor",
            )
            kind = "MaxPool2D" if class_name == "MaxPooling2D" else "AvgPool2D"
            return self.add(raw_name, kind, params)

        if class_name == "Dense":
            params = ir.DenseParams(units=int(config["units"]))
            if config.get("use_bias") is False:
                self.notes.append(f"use_bias=false on {raw_name!r} not representable; assumed true")
            node = self.add(raw_name, "Dense", params)
            return self.fuse_activation(config, raw_name, node)

        if class_name == "Flatten":
            return self.add(raw_name, "Flatten", ir.EmptyParams())

        if class_name == "Dropout":
            return self.add(raw_name, "Dropout", ir.DropoutParams(rate=float(config["rate"])))

        if class_name == "Activation":
            fn = config.get("activation")
            if fn not in ir.ACTIVATION_FNS:
                raise UnsupportedClass(f"Activation({fn!r})")
            return self.add(raw_name, "Activation", ir.ActivationParams(fn=fn))

        if class_name == "BatchNormalization":
            return self.add(raw_name, "BatchNorm", ir.EmptyParams())

        if class_name == "Concatenate":
            axis = config.get("axis", -1)
            if axis not in (-1, 3):
                raise UnsupportedClass(f"Concatenate(axis={axis})")
            return self.add(raw_name, "Concat", ir.ConcatParams())

        if class_name == "Add":
            return self.add(raw_name, "Add", ir.EmptyParams())

        if class_name == "Softmax":
            return self.add(raw_name, "Softmax", ir.EmptyParams())

        raise UnsupportedClass(class_name)


def _map_checked(builder: _Builder, class_name: str, config: dict, raw_name) -> str:
    """map_layer with stray conversion failures folded into the error type."""
    try:
        return builder.map_layer(class_name, config, str(raw_name))
    except (KeyError, TypeError, ValueError, ir.IrError) as exc:
        raise ImportSyntaxError(0, f"well-formed {class_name} config ({exc})") from None


def _sequential(builder: _Builder, entries: list):
    prev: str | None = None
    for i, entry in enumerate(entries):
        class_name, config = _entry_parts(entry, i)
        raw_name = config.get("name", f"layer{i}")
        if prev is None and class_name != "InputLayer":
            try:
                shape = _input_shape_of(config)
            except (TypeError, ValueError, ir.IrError) as exc:
                raise ImportSyntaxError(0, f"well-formed input shape ({exc})") from None
            prev = builder.add("input", "Input", ir.EmptyParams(), shape=shape)
        first_new = len(builder.layers)
        out = _map_checked(builder, class_name, config, raw_name)
        if prev is not None:
            builder.edges.append((prev, builder.layers[first_new].id))
        prev = out


def _entry_parts(entry, index) -> tuple[str, dict]:
    if not isinstance(entry, dict) or "class_name" not in entry:
        raise ImportSyntaxError(0, f"layer object with class_name at index {index}")
    config = entry.get("config", {})
    if not isinstance(config, dict):
        raise ImportSyntaxError(0, f"config object at index {index}")
    return str(entry["class_name"]), config


def _functional(builder: _Builder, entries: list):
    for i, entry in enumerate(entries):
        class_name, config = _entry_parts(entry, i)
        raw_name = str(entry.get("name") or config.get("name") or f"layer{i}")
        first_new = len(builder.layers)
        out = _map_checked(builder, class_name, config, raw_name)
        builder.alias[raw_name] = out

        inbound = entry.get("inbound_nodes", [])
        if not isinstance(inbound, list):
            raise ImportSyntaxError(0, "inbound_nodes array")
        sources: list[str] = []
        for node_group in inbound:
            if not isinstance(node_group, list):
                raise ImportSyntaxError(0, "list-style inbound_nodes")
            for ref in node_group:
                if not (isinstance(ref, list) and ref and isinstance(ref[0], str)):
                    raise ImportSyntaxError(0, "inbound reference [name, node, tensor]")
                sources.append(ref[0])
        entry_node = builder.layers[first_new].id
        for src_name in sources:
            if src_name not in builder.alias:
                raise ImportSyntaxError(0, f"inbound layer {src_name!r} defined before use")
            builder.edges.append((builder.alias[src_name], entry_node))


def import_keras_json(text: str) -> ImportReport:
    """Import a model-config JSON document.

    Raises ImportSyntaxError, UnsupportedClass, or UnsupportedPadding;
    unknown cosmetic config keys (initializers, regularizers, dtype
    policies) are ignored.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ImportSyntaxError(exc.lineno, f"valid JSON ({exc.msg})") from None
    if not isinstance(doc, dict):
        raise ImportSyntaxError(1, "a JSON object")

    class_name = doc.get("class_name")
    config = doc.get("config")
    if class_name not in ("Sequential", "Functional", "Model") or not isinstance(config, dict):
        raise ImportSyntaxError(1, "Sequential or Functional model config")
    entries = config.get("layers")
    if not isinstance(entries, list):
        raise ImportSyntaxError(1, "config.layers array")

    builder = _Builder()
    if class_name == "Sequential":
        _sequential(builder, entries)
    else:
        _functional(builder, entries)

    model = ir.Model(
        name=str(config.get("name", "imported")),
        layers=tuple(builder.layers),
        edges=tuple(set(builder.edges)),
        metadata=builder.metadata,
    )
    return ImportReport(model=model, notes=tuple(builder.notes))
