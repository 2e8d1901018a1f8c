"""Prototxt importer.

Parses the protobuf text-format subset used by network definition
files with a hand-written recursive-descent parser:

    file  = {stmt}
    stmt  = field | block
    field = ident ':' value
    block = ident [':'] '{' {stmt} '}'
    value = number | string | ident

and maps the layer table onto IR kinds. In-place layers (top blob named
like the bottom) become distinct nodes; later consumers of the blob are
rewired to the new node. Pooling defaults to ceil rounding, matching
the source framework's output arithmetic, unless round_mode says FLOOR.
"""

from __future__ import annotations

from dataclasses import dataclass

from .. import ir
from .common import DanglingBlob, ImportReport, ImportSyntaxError, UnsupportedLayer, sanitize_id

# ---------------------------------------------------------------------------
# Tokenizer / parser


@dataclass(frozen=True)
class Token:
    kind: str  # ident | number | string | punct
    value: object
    line: int


def _tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line = 1
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            i += 1
        elif c in " \t\r,":
            i += 1
        elif c == "#":
            while i < n and text[i] != "\n":
                i += 1
        elif c in ":{}":
            tokens.append(Token("punct", c, line))
            i += 1
        elif c == '"' or c == "'":
            quote = c
            j = i + 1
            out = []
            while j < n and text[j] != quote:
                if text[j] == "\\" and j + 1 < n:
                    out.append(text[j + 1])
                    j += 2
                elif text[j] == "\n":
                    raise ImportSyntaxError(line, "closing quote")
                else:
                    out.append(text[j])
                    j += 1
            if j >= n:
                raise ImportSyntaxError(line, "closing quote")
            tokens.append(Token("string", "".join(out), line))
            i = j + 1
        elif c.isdigit() or (c in "+-." and i + 1 < n and (text[i + 1].isdigit() or text[i + 1] == ".")):
            j = i + 1
            while j < n and (text[j].isdigit() or text[j] in ".eE+-"):
                # stop a number before a sign that does not follow an exponent
                if text[j] in "+-" and text[j - 1] not in "eE":
                    break
                j += 1
            raw = text[i:j]
            try:
                value: object = int(raw)
            except ValueError:
                try:
                    value = float(raw)
                except ValueError:
                    raise ImportSyntaxError(line, "number") from None
            tokens.append(Token("number", value, line))
            i = j
        elif c.isalpha() or c == "_":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(Token("ident", text[i:j], line))
            i = j
        else:
            raise ImportSyntaxError(line, f"statement, found {c!r}")
    return tokens


@dataclass(frozen=True)
class Field:
    name: str
    value: object
    line: int


@dataclass(frozen=True)
class Block:
    name: str
    body: tuple
    line: int


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> Token:
        tok = self.peek()
        if tok is None:
            last_line = self.tokens[-1].line if self.tokens else 1
            raise ImportSyntaxError(last_line, "statement, found end of input")
        self.pos += 1
        return tok

    def statements(self, top_level: bool) -> tuple:
        out = []
        while True:
            tok = self.peek()
            if tok is None:
                if top_level:
                    return tuple(out)
                raise ImportSyntaxError(self.tokens[-1].line if self.tokens else 1, "'}'")
            if tok.kind == "punct" and tok.value == "}":
                if top_level:
                    raise ImportSyntaxError(tok.line, "statement, found '}'")
                return tuple(out)
            out.append(self.statement())

    def statement(self) -> Field | Block:
        tok = self.next()
        if tok.kind != "ident":
            raise ImportSyntaxError(tok.line, f"identifier, found {tok.value!r}")
        sep = self.next()
        if sep.kind == "punct" and sep.value == ":":
            after = self.peek()
            if after is not None and after.kind == "punct" and after.value == "{":
                self.next()
                body = self.statements(top_level=False)
                self.next()  # consume '}'
                return Block(tok.value, body, tok.line)
            value_tok = self.next()
            if value_tok.kind == "punct":
                raise ImportSyntaxError(value_tok.line, f"value, found {value_tok.value!r}")
            value = value_tok.value
            if value_tok.kind == "ident":
                if value == "true":
                    value = True
                elif value == "false":
                    value = False
            return Field(tok.value, value, tok.line)
        if sep.kind == "punct" and sep.value == "{":
            body = self.statements(top_level=False)
            self.next()  # consume '}'
            return Block(tok.value, body, tok.line)
        raise ImportSyntaxError(sep.line, f"':' or '{{', found {sep.value!r}")


def parse_prototxt(text: str) -> tuple:
    """Parse prototxt into a statement tree of Field/Block nodes."""
    return _Parser(_tokenize(text)).statements(top_level=True)


# ---------------------------------------------------------------------------
# Statement helpers


def _fields(body: tuple, name: str) -> list:
    return [s.value for s in body if isinstance(s, Field) and s.name == name]


def _field(body: tuple, name: str, default=None):
    values = _fields(body, name)
    return values[0] if values else default


def _blocks(body: tuple, name: str) -> list[Block]:
    return [s for s in body if isinstance(s, Block) and s.name == name]


def _pair_of(body: tuple, base: str, default: int) -> tuple[int, int]:
    """Resolve kernel/stride/pad fields: _h/_w override the repeated form."""
    h = _field(body, f"{base}_h")
    w = _field(body, f"{base}_w")
    if h is not None or w is not None:
        return (int(h if h is not None else default), int(w if w is not None else default))
    values = _fields(body, base) or (
        _fields(body, f"{base}_size") if base == "kernel" else []
    )
    if not values:
        return (default, default)
    if len(values) == 1:
        return (int(values[0]), int(values[0]))
    return (int(values[0]), int(values[1]))


_KNOWN_PARAM_FIELDS = {
    "convolution_param": {
        "num_output", "kernel_size", "kernel_h", "kernel_w",
        "stride", "stride_h", "stride_w", "pad", "pad_h", "pad_w",
        "dilation", "group",
    },
    "pooling_param": {
        "pool", "kernel_size", "kernel_h", "kernel_w",
        "stride", "stride_h", "stride_w", "pad", "pad_h", "pad_w",
        "round_mode", "global_pooling",
    },
    "inner_product_param": {"num_output"},
    "dropout_param": {"dropout_ratio"},
    "concat_param": {"axis", "concat_dim"},
    "eltwise_param": {"operation"},
}


def _note_unknown_fields(block: Block, layer_name: str, notes: list[str]):
    known = _KNOWN_PARAM_FIELDS.get(block.name, set())
    for stmt in block.body:
        name = stmt.name
        if name not in known:
            notes.append(f"ignored field {block.name}.{name} on {layer_name!r}")


def _shape_to_channels_last(dims: list[int]) -> ir.TensorShape | None:
    """[N,C,H,W] or [N,F] (channel-first, batch leading) to IR shape."""
    if len(dims) == 4:
        _, c, h, w = dims
        return ir.TensorShape((int(h), int(w), int(c)))
    if len(dims) == 2:
        return ir.TensorShape((int(dims[1]),))
    return None


# ---------------------------------------------------------------------------
# Layer mapping


def _map_convolution(body: tuple, line: int) -> ir.Conv2DParams:
    num_output = _field(body, "num_output")
    if num_output is None:
        raise ImportSyntaxError(line, "convolution_param.num_output")
    for d in _fields(body, "dilation"):
        if int(d) != 1:
            raise UnsupportedLayer("Convolution(dilation)")
    group = _field(body, "group", 1)
    if int(group) != 1:
        raise UnsupportedLayer("Convolution(group)")
    return ir.Conv2DParams(
        filters=int(num_output),
        kernel=_pair_of(body, "kernel", 1),
        stride=_pair_of(body, "stride", 1),
        pad=_pair_of(body, "pad", 0),
        rounding="floor",
    )


def _map_pooling(body: tuple, line: int) -> tuple[str, ir.PoolParams]:
    method = _field(body, "pool", "MAX")
    if method == "MAX":
        kind = "MaxPool2D"
    elif method == "AVE":
        kind = "AvgPool2D"
    else:
        raise UnsupportedLayer(f"Pooling({method})")
    if _field(body, "global_pooling", False):
        raise UnsupportedLayer("Pooling(global_pooling)")
    round_mode = _field(body, "round_mode", "CEIL")
    params = ir.PoolParams(
        kernel=_pair_of(body, "kernel", 1),
        stride=_pair_of(body, "stride", 1),
        pad=_pair_of(body, "pad", 0),
        rounding="floor" if round_mode == "FLOOR" else "ceil",
    )
    return kind, params


_ACTIVATION_TYPES = {"ReLU": "relu", "Sigmoid": "sigmoid", "TanH": "tanh"}


def _map_layer_type(layer_type: str, body: tuple, line: int):
    """Resolve one layer statement to (kind, params, optional input shape)."""
    shape: ir.TensorShape | None = None
    if layer_type in ("Input", "Data"):
        kind, params = "Input", ir.EmptyParams()
        for param_block in _blocks(body, "input_param"):
            for shape_block in _blocks(param_block.body, "shape"):
                dims = [int(v) for v in _fields(shape_block.body, "dim")]
                shape = _shape_to_channels_last(dims)
    elif layer_type == "Convolution":
        param_body = next((b.body for b in _blocks(body, "convolution_param")), ())
        kind, params = "Conv2D", _map_convolution(param_body, line)
    elif layer_type == "Pooling":
        param_body = next((b.body for b in _blocks(body, "pooling_param")), ())
        kind, params = _map_pooling(param_body, line)
    elif layer_type == "InnerProduct":
        param_body = next((b.body for b in _blocks(body, "inner_product_param")), ())
        units = _field(param_body, "num_output")
        if units is None:
            raise ImportSyntaxError(line, "inner_product_param.num_output")
        kind, params = "Dense", ir.DenseParams(units=int(units))
    elif layer_type in _ACTIVATION_TYPES:
        kind, params = "Activation", ir.ActivationParams(fn=_ACTIVATION_TYPES[layer_type])
    elif layer_type == "Softmax":
        kind, params = "Softmax", ir.EmptyParams()
    elif layer_type == "Dropout":
        param_body = next((b.body for b in _blocks(body, "dropout_param")), ())
        rate = _field(param_body, "dropout_ratio", 0.5)
        kind, params = "Dropout", ir.DropoutParams(rate=float(rate))
    elif layer_type == "Flatten":
        kind, params = "Flatten", ir.EmptyParams()
    elif layer_type == "BatchNorm":
        kind, params = "BatchNorm", ir.EmptyParams()
    elif layer_type == "Concat":
        param_body = next((b.body for b in _blocks(body, "concat_param")), ())
        axis = _field(param_body, "axis", _field(param_body, "concat_dim", 1))
        if int(axis) != 1:
            raise UnsupportedLayer(f"Concat(axis={axis})")
        kind, params = "Concat", ir.ConcatParams()
    elif layer_type == "Eltwise":
        param_body = next((b.body for b in _blocks(body, "eltwise_param")), ())
        operation = _field(param_body, "operation", "SUM")
        if operation != "SUM":
            raise UnsupportedLayer(f"Eltwise({operation})")
        kind, params = "Add", ir.EmptyParams()
    else:
        raise UnsupportedLayer(layer_type)
    return kind, params, shape


def import_caffe(text: str) -> ImportReport:
    """Import a prototxt network definition.

    Raises ImportSyntaxError, UnsupportedLayer, or DanglingBlob; any
    returned model satisfies the IR's structural invariants.
    """
    stmts = parse_prototxt(text)
    notes: list[str] = []
    taken: set[str] = set()
    layers: list[ir.Layer] = []
    edges: list[tuple[str, str]] = []
    metadata: dict[str, str] = {}
    producer: dict[str, str] = {}

    def bind_shape(layer_id: str, shape: ir.TensorShape | None):
        if shape is not None:
            metadata[f"{ir.INPUT_SHAPE_KEY}.{layer_id}"] = str(shape)

    model_name = _field(stmts, "name", "imported")

    # Legacy top-level inputs: input: "data" with input_dim/input_shape.
    legacy_inputs = [str(v) for v in _fields(stmts, "input")]
    if legacy_inputs:
        try:
            dims = [int(v) for v in _fields(stmts, "input_dim")]
            shape_blocks = _blocks(stmts, "input_shape")
            for idx, blob in enumerate(legacy_inputs):
                lid = sanitize_id(blob, taken)
                layers.append(ir.layer(lid, "Input"))
                producer[blob] = lid
                if shape_blocks:
                    if idx < len(shape_blocks):
                        block_dims = [int(v) for v in _fields(shape_blocks[idx].body, "dim")]
                        bind_shape(lid, _shape_to_channels_last(block_dims))
                elif dims:
                    chunk = dims[idx * 4 : idx * 4 + 4]
                    bind_shape(lid, _shape_to_channels_last(chunk))
        except (TypeError, ValueError, ir.IrError) as exc:
            raise ImportSyntaxError(1, f"well-formed input declaration ({exc})") from None

    for stmt in stmts:
        if isinstance(stmt, Field):
            if stmt.name not in ("name", "input", "input_dim"):
                notes.append(f"ignored top-level field {stmt.name}")
            continue
        if stmt.name in ("input_shape",):
            continue
        if stmt.name != "layer":
            notes.append(f"ignored top-level block {stmt.name}")
            continue

        body = stmt.body
        layer_type = _field(body, "type")
        if layer_type is None:
            raise ImportSyntaxError(stmt.line, "layer type")
        layer_type = str(layer_type)
        raw_name = str(_field(body, "name", f"layer{len(layers)}"))
        bottoms = [str(b) for b in _fields(body, "bottom")]
        tops = [str(t) for t in _fields(body, "top")]

        try:
            kind, params, shape = _map_layer_type(layer_type, body, stmt.line)
        except (TypeError, ValueError, ir.IrError) as exc:
            raise ImportSyntaxError(stmt.line, f"well-formed layer fields ({exc})") from None

        for block in (s for s in body if isinstance(s, Block)):
            if block.name in _KNOWN_PARAM_FIELDS:
                _note_unknown_fields(block, raw_name, notes)
            elif block.name != "input_param":
                notes.append(f"ignored field {block.name} on {raw_name!r}")
        for f in (s for s in body if isinstance(s, Field)):
            if f.name not in ("name", "type", "bottom", "top"):
                notes.append(f"ignored field {f.name} on {raw_name!r}")

        lid = sanitize_id(raw_name, taken)
        layers.append(ir.Layer(lid, kind, params, name=raw_name if raw_name != lid else ""))
        bind_shape(lid, shape)

        for blob in bottoms:
            if blob not in producer:
                raise DanglingBlob(blob)
            edges.append((producer[blob], lid))
            if blob in tops:
                if kind == "Activation":
                    notes.append(f"in-place activation materialized: {lid}")
                else:
                    notes.append(f"in-place layer materialized: {lid}")
        for blob in tops:
            producer[blob] = lid

    model = ir.Model(
        name=str(model_name),
        layers=tuple(layers),
        edges=tuple(set(edges)),
        metadata=metadata,
    )
    return ImportReport(model=model, notes=tuple(notes))
