"""Static shape inference and parameter counting over layer DAGs.

Spatial extents follow the standard windowed-sweep arithmetic

    out = round((extent + 2*pad - kernel) / stride) + 1

where round is the layer's own rounding mode. The mode is per layer
because interchange sources disagree (caffe pools round up, keras-style
layers round down) and the graph must represent both faithfully.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ir import Model, TensorShape, topo_order

__all__ = [
    "ShapeError",
    "ArityMismatch",
    "KernelExceedsInput",
    "RankMismatch",
    "ConcatMismatch",
    "ShapeMismatch",
    "InvalidDimension",
    "UnboundInput",
    "MissingShape",
    "ParamReport",
    "window_count",
    "layer_output_shape",
    "infer_shapes",
    "infer_shapes_partial",
    "count_params",
]


class ShapeError(Exception):
    """Shape inference failure; layer_id is filled in by infer_shapes."""

    def __init__(self, message: str, layer_id: str | None = None):
        self.layer_id = layer_id
        super().__init__(message)

    def at_layer(self, layer_id: str) -> "ShapeError":
        exc = type(self)(f"layer {layer_id!r}: {self.args[0]}")
        exc.layer_id = layer_id
        return exc


class ArityMismatch(ShapeError):
    pass


class KernelExceedsInput(ShapeError):
    pass


class RankMismatch(ShapeError):
    pass


class ConcatMismatch(ShapeError):
    pass


class ShapeMismatch(ShapeError):
    """Elementwise-merge inputs differ (Add)."""


class InvalidDimension(ShapeError):
    """A hyperparameter is outside its numeric range (filters < 1, ...)."""


class UnboundInput(ShapeError):
    pass


class MissingShape(ShapeError):
    pass


def window_count(extent: int, kernel: int, stride: int, pad: int, rounding: str) -> int:
    """Number of window positions along one axis.

    Equals the count of kernel placements starting at multiples of the
    stride inside the padded extent: only complete windows for floor
    mode, plus the one window that first reaches the padded end for ceil
    mode (caffe semantics).
    """
    if kernel < 1 or stride < 1:
        raise InvalidDimension(f"kernel and stride must be >= 1, got k={kernel} s={stride}")
    if pad < 0:
        raise InvalidDimension(f"pad must be >= 0, got {pad}")
    span = extent + 2 * pad - kernel
    if span < 0:
        raise KernelExceedsInput(
            f"kernel {kernel} exceeds padded input {extent} + 2*{pad}"
        )
    if rounding == "ceil":
        return -(-span // stride) + 1
    return span // stride + 1


def _single(inputs: list[TensorShape], kind: str) -> TensorShape:
    if len(inputs) != 1:
        raise ArityMismatch(f"{kind} takes exactly 1 input, got {len(inputs)}")
    return inputs[0]


def _spatial(shape: TensorShape, kind: str) -> tuple[int, int, int]:
    if shape.rank != 3:
        raise RankMismatch(f"{kind} expects a rank-3 (H, W, C) input, got {shape}")
    return shape.dims  # type: ignore[return-value]


def layer_output_shape(kind: str, params, inputs: list[TensorShape]) -> TensorShape:
    """Output shape of one layer, given its input shapes."""
    if kind == "Input":
        return _single(inputs, kind)

    if kind == "Conv2D":
        h, w, _ = _spatial(_single(inputs, kind), kind)
        if params.filters < 1:
            raise InvalidDimension(f"Conv2D filters must be >= 1, got {params.filters}")
        oh = window_count(h, params.kernel[0], params.stride[0], params.pad[0], params.rounding)
        ow = window_count(w, params.kernel[1], params.stride[1], params.pad[1], params.rounding)
        return TensorShape((oh, ow, params.filters))

    if kind in ("MaxPool2D", "AvgPool2D"):
        h, w, c = _spatial(_single(inputs, kind), kind)
        oh = window_count(h, params.kernel[0], params.stride[0], params.pad[0], params.rounding)
        ow = window_count(w, params.kernel[1], params.stride[1], params.pad[1], params.rounding)
        return TensorShape((oh, ow, c))

    if kind == "Dense":
        shape = _single(inputs, kind)
        if shape.rank != 1:
            raise RankMismatch(
                f"Dense expects a flat (features,) input, got {shape}; insert Flatten"
            )
        if params.units < 1:
            raise InvalidDimension(f"Dense units must be >= 1, got {params.units}")
        return TensorShape((params.units,))

    if kind == "Flatten":
        shape = _single(inputs, kind)
        total = 1
        for d in shape.dims:
            total *= d
        return TensorShape((total,))

    if kind in ("Activation", "Dropout", "BatchNorm", "Softmax"):
        return _single(inputs, kind)

    if kind == "Concat":
        if len(inputs) < 2:
            raise ArityMismatch(f"Concat takes >= 2 inputs, got {len(inputs)}")
        ranks = {s.rank for s in inputs}
        if len(ranks) != 1:
            raise ConcatMismatch(f"Concat inputs must share rank, got {sorted(ranks)}")
        heads = {s.dims[:-1] for s in inputs}
        if len(heads) != 1:
            raise ConcatMismatch(
                "Concat non-channel dims differ: " + ", ".join(str(s) for s in inputs)
            )
        channels = sum(s.dims[-1] for s in inputs)
        return TensorShape(inputs[0].dims[:-1] + (channels,))

    if kind == "Add":
        if len(inputs) < 2:
            raise ArityMismatch(f"Add takes >= 2 inputs, got {len(inputs)}")
        if len({s.dims for s in inputs}) != 1:
            raise ShapeMismatch(
                "Add inputs must be identical: " + ", ".join(str(s) for s in inputs)
            )
        return inputs[0]

    raise ShapeError(f"no shape rule for kind {kind!r}")


def _check_bindings(model: Model, bindings: dict[str, TensorShape]) -> None:
    inputs = set(model.input_ids())
    for lid in bindings:
        if lid not in inputs:
            raise UnboundInput(f"binding {lid!r} does not name an Input layer")
    for lid in sorted(inputs - set(bindings)):
        raise UnboundInput(f"Input layer {lid!r} has no bound shape")


def _walk(model: Model, bindings: dict[str, TensorShape], collect_errors: bool):
    by_id = model.layer_map()
    shapes: dict[str, TensorShape] = {}
    failures: list[ShapeError] = []
    dead: set[str] = set()
    for lid in topo_order(model):
        lyr = by_id[lid]
        if lyr.kind == "Input":
            if lid in bindings:
                shapes[lid] = bindings[lid]
            else:
                dead.add(lid)
            continue
        preds = model.predecessors(lid)
        if not preds or any(p in dead for p in preds) or any(p not in shapes for p in preds):
            # unreachable or downstream of a failure: no defined shape
            dead.add(lid)
            continue
        try:
            shapes[lid] = layer_output_shape(lyr.kind, lyr.params, [shapes[p] for p in preds])
        except ShapeError as exc:
            located = exc.at_layer(lid)
            if not collect_errors:
                raise located from None
            failures.append(located)
            dead.add(lid)
    return shapes, failures


def infer_shapes(model: Model, bindings: dict[str, TensorShape]) -> dict[str, TensorShape]:
    """Propagate shapes from bound inputs through the DAG.

    Returns layer id -> output shape for every layer whose inputs are
    all reachable from bound Input layers. The first faulty layer raises
    with its id attached.
    """
    _check_bindings(model, bindings)
    shapes, _ = _walk(model, bindings, collect_errors=False)
    return shapes


def infer_shapes_partial(
    model: Model, bindings: dict[str, TensorShape]
) -> tuple[dict[str, TensorShape], list[ShapeError]]:
    """Tolerant variant for diagnosing broken designs.

    Faulty layers are reported instead of raised; everything downstream
    of a fault simply has no shape. Missing bindings are reported the
    same way, and cyclic models yield an empty map (the linter owns the
    cycle report).
    """
    failures: list[ShapeError] = []
    bound = dict(bindings)
    try:
        _check_bindings(model, bound)
    except UnboundInput as exc:
        failures.append(exc)
        bound = {k: v for k, v in bound.items() if k in set(model.input_ids())}
    from .ir import CycleDetected

    try:
        shapes, walk_failures = _walk(
            model,
            {lid: bound[lid] for lid in model.input_ids() if lid in bound},
            collect_errors=True,
        )
    except CycleDetected as exc:
        failures.append(ShapeError(str(exc)))
        return {}, failures
    return shapes, failures + walk_failures


@dataclass(frozen=True)
class ParamReport:
    """Trainable parameter counts per layer and in total."""

    per_layer: dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.per_layer.values())


def count_params(model: Model, shapes: dict[str, TensorShape]) -> ParamReport:
    """Count trainable parameters from inferred shapes.

    Conv2D: kh*kw*Cin*filters + filters. Dense: Fin*units + units.
    BatchNorm: 4 per channel (scale, shift, moving mean, moving
    variance; stated explicitly because frameworks disagree on what
    counts as trainable). Everything else: 0.
    """
    counts: dict[str, int] = {}
    for lyr in model.layers:
        if lyr.kind == "Conv2D":
            fan_in = _required_input(model, shapes, lyr.id)
            if fan_in.rank != 3:
                raise MissingShape(f"layer {lyr.id!r}: Conv2D input is not rank 3")
            kh, kw = lyr.params.kernel
            counts[lyr.id] = kh * kw * fan_in.channels * lyr.params.filters + lyr.params.filters
        elif lyr.kind == "Dense":
            fan_in = _required_input(model, shapes, lyr.id)
            counts[lyr.id] = fan_in.dims[0] * lyr.params.units + lyr.params.units
        elif lyr.kind == "BatchNorm":
            if lyr.id not in shapes:
                raise MissingShape(f"layer {lyr.id!r} has no inferred shape")
            counts[lyr.id] = 4 * shapes[lyr.id].channels
        else:
            counts[lyr.id] = 0
    return ParamReport(per_layer=counts)


def _required_input(model: Model, shapes: dict[str, TensorShape], lid: str) -> TensorShape:
    preds = model.predecessors(lid)
    if len(preds) != 1 or preds[0] not in shapes:
        raise MissingShape(f"layer {lid!r} has no single shaped input")
    return shapes[preds[0]]
