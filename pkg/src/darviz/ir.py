"""Framework-neutral model representation: a DAG of typed layers.

A model is a directed graph of layers, each carrying a kind from a closed
vocabulary and kind-specific hyperparameters. All values are immutable;
every operation returns a new model and never touches its inputs, so
models can be shared freely across threads.

Numeric hyperparameter ranges (positive filter counts, dropout rate in
(0, 1), ...) are documented contracts checked by the linter, not by the
constructors: a broken design must be representable so it can be
diagnosed and repaired.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

IR_FORMAT = "darviz-ir"
IR_VERSION = 1

LAYER_KINDS = (
    "Input",
    "Conv2D",
    "MaxPool2D",
    "AvgPool2D",
    "Dense",
    "Flatten",
    "Dropout",
    "BatchNorm",
    "Activation",
    "Concat",
    "Add",
    "Softmax",
)

ACTIVATION_FNS = ("relu", "sigmoid", "tanh", "softmax")
ROUNDING_MODES = ("floor", "ceil")

_ID_RE = re.compile(r"[A-Za-z0-9_./-]+\Z")


class IrError(Exception):
    """Base class for every model-representation error."""


class DuplicateId(IrError):
    pass


class UnknownId(IrError):
    pass


class SelfLoop(IrError):
    pass


class InvalidLayer(IrError):
    """Structurally malformed layer (bad id, wrong params record, ...)."""


class CycleDetected(IrError):
    def __init__(self, cycle: list[str]):
        self.cycle = list(cycle)
        super().__init__("cycle detected: " + " -> ".join(self.cycle + self.cycle[:1]))


class ParseError(IrError):
    def __init__(self, message: str, line: int | None = None, offset: int | None = None):
        self.line = line
        self.offset = offset
        if line is not None:
            message = f"line {line}, offset {offset}: {message}"
        super().__init__(message)


class UnsupportedVersion(IrError):
    pass


class UnknownKind(IrError):
    pass


# ---------------------------------------------------------------------------
# Shapes


@dataclass(frozen=True)
class TensorShape:
    """Activation shape, batch dimension excluded.

    Canonical layout is channels-last: (height, width, channels) for
    spatial tensors, (features,) for flat ones. Only those two ranks
    exist in v1.
    """

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) not in (1, 3):
            raise InvalidLayer(f"activation shapes are rank 1 or 3, got rank {len(dims)}")
        if any(d < 1 for d in dims):
            raise InvalidLayer(f"shape extents must be >= 1, got {dims}")

    @property
    def rank(self) -> int:
        return len(self.dims)

    @property
    def channels(self) -> int:
        return self.dims[-1]

    def __str__(self):
        return "x".join(str(d) for d in self.dims)


def parse_shape(text: str) -> TensorShape:
    """Parse the external "HxWxC" / "F" shape syntax."""
    parts = text.lower().split("x")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise InvalidLayer(f"malformed shape {text!r}, expected e.g. 224x224x3") from None
    return TensorShape(dims)


# ---------------------------------------------------------------------------
# Layer parameter records


def _pair(value, name: str) -> tuple[int, int]:
    if isinstance(value, int):
        return (value, value)
    try:
        a, b = value
        return (int(a), int(b))
    except (TypeError, ValueError):
        raise InvalidLayer(f"{name} must be an int or a pair of ints, got {value!r}") from None


@dataclass(frozen=True)
class Conv2DParams:
    filters: int
    kernel: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    pad: tuple[int, int] = (0, 0)
    rounding: str = "floor"

    def __post_init__(self):
        object.__setattr__(self, "filters", int(self.filters))
        object.__setattr__(self, "kernel", _pair(self.kernel, "kernel"))
        object.__setattr__(self, "stride", _pair(self.stride, "stride"))
        object.__setattr__(self, "pad", _pair(self.pad, "pad"))
        if self.rounding not in ROUNDING_MODES:
            raise InvalidLayer(f"rounding must be one of {ROUNDING_MODES}, got {self.rounding!r}")


@dataclass(frozen=True)
class PoolParams:
    kernel: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    pad: tuple[int, int] = (0, 0)
    rounding: str = "floor"

    def __post_init__(self):
        object.__setattr__(self, "kernel", _pair(self.kernel, "kernel"))
        object.__setattr__(self, "stride", _pair(self.stride, "stride"))
        object.__setattr__(self, "pad", _pair(self.pad, "pad"))
        if self.rounding not in ROUNDING_MODES:
            raise InvalidLayer(f"rounding must be one of {ROUNDING_MODES}, got {self.rounding!r}")


@dataclass(frozen=True)
class DenseParams:
    units: int

    def __post_init__(self):
        object.__setattr__(self, "units", int(self.units))


@dataclass(frozen=True)
class DropoutParams:
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "rate", float(self.rate))


@dataclass(frozen=True)
class ActivationParams:
    fn: str

    def __post_init__(self):
        if self.fn not in ACTIVATION_FNS:
            raise InvalidLayer(f"activation fn must be one of {ACTIVATION_FNS}, got {self.fn!r}")


@dataclass(frozen=True)
class ConcatParams:
    axis: str = "channel"

    def __post_init__(self):
        if self.axis != "channel":
            raise InvalidLayer(f"concat axis must be 'channel' in v1, got {self.axis!r}")


@dataclass(frozen=True)
class EmptyParams:
    pass


PARAMS_BY_KIND = {
    "Input": EmptyParams,
    "Conv2D": Conv2DParams,
    "MaxPool2D": PoolParams,
    "AvgPool2D": PoolParams,
    "Dense": DenseParams,
    "Flatten": EmptyParams,
    "Dropout": DropoutParams,
    "BatchNorm": EmptyParams,
    "Activation": ActivationParams,
    "Concat": ConcatParams,
    "Add": EmptyParams,
    "Softmax": EmptyParams,
}

LayerParams = (
    Conv2DParams
    | PoolParams
    | DenseParams
    | DropoutParams
    | ActivationParams
    | ConcatParams
    | EmptyParams
)


def make_params(kind: str, **fields) -> LayerParams:
    """Build the parameter record matching a layer kind."""
    if kind not in PARAMS_BY_KIND:
        raise UnknownKind(f"unknown layer kind {kind!r}")
    cls = PARAMS_BY_KIND[kind]
    try:
        return cls(**fields)
    except TypeError as exc:
        raise InvalidLayer(f"bad params for {kind}: {exc}") from None


def params_to_dict(params: LayerParams) -> dict:
    out = {}
    for name in getattr(params, "__dataclass_fields__", {}):
        value = getattr(params, name)
        out[name] = list(value) if isinstance(value, tuple) else value
    return out


# ---------------------------------------------------------------------------
# Layers and models


@dataclass(frozen=True)
class Layer:
    id: str
    kind: str
    params: LayerParams = field(default_factory=EmptyParams)
    name: str = ""

    def __post_init__(self):
        if not self.id or not _ID_RE.match(self.id):
            raise InvalidLayer(f"layer id {self.id!r} must match [A-Za-z0-9_./-]+")
        if self.kind not in LAYER_KINDS:
            raise UnknownKind(f"unknown layer kind {self.kind!r}")
        expected = PARAMS_BY_KIND[self.kind]
        if type(self.params) is not expected:
            raise InvalidLayer(
                f"layer {self.id!r}: kind {self.kind} takes {expected.__name__}, "
                f"got {type(self.params).__name__}"
            )
        if not self.name:
            object.__setattr__(self, "name", self.id)


def layer(id: str, kind: str, name: str = "", **params) -> Layer:
    """Shorthand constructor: ``layer("c1", "Conv2D", filters=64, kernel=3)``."""
    return Layer(id=id, kind=kind, params=make_params(kind, **params), name=name)


@dataclass(frozen=True)
class Model:
    """An immutable layer DAG with string metadata.

    Construction checks structural validity only: unique well-formed
    layer ids and edges between existing, distinct layers. Cycles are
    representable (the linter reports them as L1); topo_order and the
    shape engine refuse them.
    """

    name: str = "model"
    layers: tuple[Layer, ...] = ()
    edges: frozenset[tuple[str, str]] = frozenset()
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "edges", frozenset(tuple(e) for e in self.edges))
        object.__setattr__(self, "metadata", dict(self.metadata))
        seen = set()
        for l in self.layers:
            if l.id in seen:
                raise DuplicateId(f"duplicate layer id {l.id!r}")
            seen.add(l.id)
        for src, dst in self.edges:
            if src == dst:
                raise SelfLoop(f"self-loop edge on {src!r}")
            for end in (src, dst):
                if end not in seen:
                    raise UnknownId(f"edge endpoint {end!r} is not a layer id")

    def layer_map(self) -> dict[str, Layer]:
        return {l.id: l for l in self.layers}

    def predecessors(self, layer_id: str) -> list[str]:
        """Incoming neighbor ids, sorted for determinism."""
        return sorted(src for src, dst in self.edges if dst == layer_id)

    def successors(self, layer_id: str) -> list[str]:
        return sorted(dst for src, dst in self.edges if src == layer_id)

    def input_ids(self) -> list[str]:
        return sorted(l.id for l in self.layers if l.kind == "Input")

    def terminal_ids(self) -> list[str]:
        withedge = {src for src, _ in self.edges}
        return sorted(l.id for l in self.layers if l.id not in withedge)


def add_layer(model: Model, new: Layer) -> Model:
    """Return a copy of the model with one more layer."""
    if any(l.id == new.id for l in model.layers):
        raise DuplicateId(f"layer id {new.id!r} already present")
    return replace(model, layers=model.layers + (new,))


def remove_layer(model: Model, layer_id: str, rewire: bool = False) -> Model:
    """Drop a layer and its edges; with rewire, bridge predecessors to successors."""
    if layer_id not in model.layer_map():
        raise UnknownId(f"no layer {layer_id!r}")
    preds = model.predecessors(layer_id)
    succs = model.successors(layer_id)
    edges = {e for e in model.edges if layer_id not in e}
    if rewire:
        edges |= {(p, s) for p in preds for s in succs if p != s}
    layers = tuple(l for l in model.layers if l.id != layer_id)
    return replace(model, layers=layers, edges=frozenset(edges))


def connect(model: Model, src: str, dst: str) -> Model:
    """Return a copy with an edge src -> dst added (set semantics)."""
    ids = {l.id for l in model.layers}
    for end in (src, dst):
        if end not in ids:
            raise UnknownId(f"no layer {end!r}")
    if src == dst:
        raise SelfLoop(f"cannot connect {src!r} to itself")
    return replace(model, edges=model.edges | {(src, dst)})


def disconnect(model: Model, src: str, dst: str) -> Model:
    return replace(model, edges=model.edges - {(src, dst)})


def set_metadata(model: Model, key: str, value: str) -> Model:
    md = dict(model.metadata)
    md[key] = value
    return replace(model, metadata=md)


# ---------------------------------------------------------------------------
# Graph utilities


def find_cycle(model: Model) -> list[str]:
    """Return the node ids of one cycle, or [] when acyclic.

    Depth-first search over layers in id order, so the reported cycle is
    deterministic for a given model.
    """
    succ: dict[str, list[str]] = {l.id: [] for l in model.layers}
    for src, dst in sorted(model.edges):
        succ[src].append(dst)
    WHITE, GREY, BLACK = 0, 1, 2
    color = {lid: WHITE for lid in succ}
    stack: list[str] = []

    def visit(node: str) -> list[str] | None:
        color[node] = GREY
        stack.append(node)
        for nxt in succ[node]:
            if color[nxt] == GREY:
                return stack[stack.index(nxt):]
            if color[nxt] == WHITE:
                found = visit(nxt)
                if found is not None:
                    return found
        stack.pop()
        color[node] = BLACK
        return None

    for lid in sorted(succ):
        if color[lid] == WHITE:
            found = visit(lid)
            if found is not None:
                return found
    return []


def _kahn_order(model: Model, break_cycles: bool) -> list[str]:
    import heapq

    indeg = {l.id: 0 for l in model.layers}
    succ: dict[str, list[str]] = {l.id: [] for l in model.layers}
    for src, dst in model.edges:
        indeg[dst] += 1
        succ[src].append(dst)
    ready = [lid for lid, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    out: list[str] = []
    emitted: set[str] = set()
    while len(out) < len(indeg):
        if not ready:
            if not break_cycles:
                raise CycleDetected(find_cycle(model))
            # deterministic fallback: release the smallest blocked id
            blocked = min(lid for lid in indeg if lid not in emitted)
            heapq.heappush(ready, blocked)
            indeg[blocked] = 0
        node = heapq.heappop(ready)
        if node in emitted:
            continue
        out.append(node)
        emitted.add(node)
        for nxt in succ[node]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                heapq.heappush(ready, nxt)
    return out


def topo_order(model: Model) -> list[str]:
    """Layer ids such that every edge goes forward; lexicographic tiebreak.

    Raises CycleDetected (carrying one cycle's ids) on cyclic graphs.
    """
    return _kahn_order(model, break_cycles=False)


def serialization_order(model: Model) -> list[str]:
    """topo_order that degrades deterministically on cyclic graphs.

    Broken (cyclic) designs must still serialize so they can be saved
    and diagnosed; cycle members are released in lexicographic order.
    """
    return _kahn_order(model, break_cycles=True)


def reachable_from_inputs(model: Model) -> set[str]:
    succ: dict[str, list[str]] = {l.id: [] for l in model.layers}
    for src, dst in model.edges:
        succ[src].append(dst)
    seen = set(model.input_ids())
    frontier = list(seen)
    while frontier:
        node = frontier.pop()
        for nxt in succ[node]:
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return seen


# ---------------------------------------------------------------------------
# Interchange format


def serialize_ir(model: Model) -> str:
    """Render the canonical interchange document.

    Byte-deterministic: layers in topological order with lexicographic
    tiebreaks, edges sorted, keys sorted, two-space indent, trailing
    newline.
    """
    by_id = model.layer_map()
    layers = [
        {
            "id": lid,
            "kind": by_id[lid].kind,
            "name": by_id[lid].name,
            "params": params_to_dict(by_id[lid].params),
        }
        for lid in serialization_order(model)
    ]
    doc = {
        "format": IR_FORMAT,
        "version": IR_VERSION,
        "name": model.name,
        "layers": layers,
        "edges": [list(e) for e in sorted(model.edges)],
        "metadata": dict(model.metadata),
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def model_to_document(model: Model) -> dict:
    """The interchange document as a plain dict (for JSON APIs)."""
    return json.loads(serialize_ir(model))


_TOP_KEYS = {"format", "version", "name", "layers", "edges", "metadata"}
_LAYER_KEYS = {"id", "kind", "name", "params"}


def _as_str(value, what: str) -> str:
    if not isinstance(value, str):
        raise ParseError(f"{what} must be a string, got {type(value).__name__}")
    return value


def parse_ir(text: str) -> Model:
    """Parse an interchange document; inverse of serialize_ir."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, offset=exc.colno) from None
    return document_to_model(doc)


def document_to_model(doc) -> Model:
    if not isinstance(doc, dict):
        raise ParseError("interchange document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ParseError(f"unknown top-level fields: {sorted(unknown)}")
    for required in ("format", "version", "layers", "edges"):
        if required not in doc:
            raise ParseError(f"missing top-level field {required!r}")
    if doc["format"] != IR_FORMAT:
        raise ParseError(f"format must be {IR_FORMAT!r}, got {doc['format']!r}")
    if doc["version"] != IR_VERSION:
        raise UnsupportedVersion(f"unsupported version {doc['version']!r}, expected {IR_VERSION}")

    layers = []
    for entry in doc["layers"]:
        if not isinstance(entry, dict):
            raise ParseError("layer entries must be objects")
        extra = set(entry) - _LAYER_KEYS
        if extra:
            raise ParseError(f"unknown layer fields: {sorted(extra)}")
        for required in ("id", "kind", "params"):
            if required not in entry:
                raise ParseError(f"layer entry missing {required!r}")
        kind = _as_str(entry["kind"], "layer kind")
        if kind not in LAYER_KINDS:
            raise UnknownKind(f"unknown layer kind {kind!r}")
        params_doc = entry["params"]
        if not isinstance(params_doc, dict):
            raise ParseError(f"layer {entry['id']!r}: params must be an object")
        try:
            params = make_params(kind, **params_doc)
            layers.append(
                Layer(
                    id=_as_str(entry["id"], "layer id"),
                    kind=kind,
                    params=params,
                    name=_as_str(entry.get("name", ""), "layer name"),
                )
            )
        except InvalidLayer as exc:
            raise ParseError(str(exc)) from None

    edges = []
    for pair in doc["edges"]:
        if not (isinstance(pair, list) and len(pair) == 2):
            raise ParseError(f"edges must be [from, to] pairs, got {pair!r}")
        edges.append((_as_str(pair[0], "edge endpoint"), _as_str(pair[1], "edge endpoint")))

    metadata = doc.get("metadata", {})
    if not isinstance(metadata, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in metadata.items()
    ):
        raise ParseError("metadata must map strings to strings")

    try:
        return Model(
            name=_as_str(doc.get("name", "model"), "model name"),
            layers=tuple(layers),
            edges=frozenset(edges),
            metadata=metadata,
        )
    except (DuplicateId, UnknownId, SelfLoop) as exc:
        raise ParseError(str(exc)) from None


# ---------------------------------------------------------------------------
# Comparison


def structurally_equal(a: Model, b: Model) -> bool:
    """Same name, metadata, layer set (by id), and edge set; layer order ignored."""
    def key(m: Model):
        return (
            m.name,
            dict(m.metadata),
            {l.id: (l.kind, l.params, l.name) for l in m.layers},
            set(m.edges),
        )

    return key(a) == key(b)


def graph_isomorphic(a: Model, b: Model) -> bool:
    """True iff some id bijection preserves layer kind, params, and edges.

    Layer ids and names are not compared. Color refinement narrows the
    candidate sets, then backtracking settles the ambiguous remainder;
    models at this scale (tens of layers) resolve instantly.
    """
    if len(a.layers) != len(b.layers) or len(a.edges) != len(b.edges):
        return False

    def structure(m: Model):
        pred: dict[str, list[str]] = {l.id: [] for l in m.layers}
        succ: dict[str, list[str]] = {l.id: [] for l in m.layers}
        for s, d in m.edges:
            succ[s].append(d)
            pred[d].append(s)
        return pred, succ

    pred_a, succ_a = structure(a)
    pred_b, succ_b = structure(b)

    def refine(m: Model, pred, succ) -> dict[str, tuple]:
        color = {
            l.id: (l.kind, repr(l.params), len(pred[l.id]), len(succ[l.id]))
            for l in m.layers
        }
        for _ in range(len(m.layers)):
            nxt = {
                lid: (
                    color[lid],
                    tuple(sorted(color[p] for p in pred[lid])),
                    tuple(sorted(color[s] for s in succ[lid])),
                )
                for lid in color
            }
            if len(set(nxt.values())) == len(set(color.values())):
                color = nxt
                break
            color = nxt
        return color

    color_a = refine(a, pred_a, succ_a)
    color_b = refine(b, pred_b, succ_b)
    from collections import Counter

    if Counter(color_a.values()) != Counter(color_b.values()):
        return False

    candidates = {
        na: sorted(nb for nb in color_b if color_b[nb] == color_a[na])
        for na in color_a
    }
    order = sorted(color_a, key=lambda n: (len(candidates[n]), n))
    edges_b = set(b.edges)
    mapping: dict[str, str] = {}
    used: set[str] = set()

    def assign(i: int) -> bool:
        if i == len(order):
            return True
        na = order[i]
        for nb in candidates[na]:
            if nb in used:
                continue
            ok = True
            for p in pred_a[na]:
                if p in mapping and (mapping[p], nb) not in edges_b:
                    ok = False
                    break
            if ok:
                for s in succ_a[na]:
                    if s in mapping and (nb, mapping[s]) not in edges_b:
                        ok = False
                        break
            if ok:
                mapping[na] = nb
                used.add(nb)
                if assign(i + 1):
                    return True
                del mapping[na]
                used.discard(nb)
        return False

    return assign(0)


# ---------------------------------------------------------------------------
# Input-shape metadata convention

INPUT_SHAPE_KEY = "input_shape"


def input_bindings_from_metadata(model: Model) -> dict[str, TensorShape]:
    """Read input shapes recorded in model metadata.

    ``input_shape.<layer-id>`` binds one Input layer; a bare
    ``input_shape`` binds the single Input layer of the model. Returns
    whatever subset is present; callers decide whether gaps are fatal.
    """
    bindings: dict[str, TensorShape] = {}
    inputs = model.input_ids()
    for key, value in model.metadata.items():
        if key.startswith(INPUT_SHAPE_KEY + "."):
            lid = key[len(INPUT_SHAPE_KEY) + 1:]
            if lid in inputs:
                bindings[lid] = parse_shape(value)
    if INPUT_SHAPE_KEY in model.metadata and len(inputs) == 1 and inputs[0] not in bindings:
        bindings[inputs[0]] = parse_shape(model.metadata[INPUT_SHAPE_KEY])
    return bindings


def bind_input_shape(model: Model, layer_id: str, shape: TensorShape) -> Model:
    """Record an input shape in metadata using the per-layer key."""
    if layer_id not in model.layer_map():
        raise UnknownId(f"no layer {layer_id!r}")
    return set_metadata(model, f"{INPUT_SHAPE_KEY}.{layer_id}", str(shape))
