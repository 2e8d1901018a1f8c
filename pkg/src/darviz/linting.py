"""Static design validation against a fixed, documented rule catalog.

Rules (stable ids; "error" marks structural impossibilities, "warning"
marks risky-but-runnable designs):

  L1  layers form a cycle                                      error
  L2  no Input layer, or no terminal layer                     error
  L3  layer unreachable from any Input                         warning
  L4  Dense fed spatial (rank-3) data without a Flatten        error
  L5  Dropout rate 0 (no-op) / outside [0, 1)                  warning/error
  L6  kernel larger than the padded input (needs shapes)       error
  L7  softmax that is not the terminal layer                   warning
  L8  Concat inputs disagree off the channel axis (needs shapes) error
  L9  metadata learning rate outside [1e-6, 1.0]               warning

L6 and L8 need the offending layer's input shapes; pass the map from
infer_shapes_partial when diagnosing models whose inference fails.
Suggested fixes are attached where a mechanical repair exists and
apply_suggestion() performs them.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from . import ir
from .ir import Model, TensorShape

# Documented defaults; see suggest_hyperparams.
DEFAULT_LEARNING_RATE = 1e-3
LEARNING_RATE_RANGE = (1e-6, 1.0)
CONV_RUN_THRESHOLD = 6
DEFAULT_DROPOUT_RATE = 0.5

LEARNING_RATE_KEY = "learning_rate"

_SPATIAL_PRODUCERS = {"Conv2D", "MaxPool2D", "AvgPool2D"}
_FLAT_PRODUCERS = {"Flatten", "Dense"}
_RANK_PRESERVING = {"Activation", "Dropout", "BatchNorm", "Softmax", "Concat", "Add"}


@dataclass(frozen=True)
class Suggestion:
    """A mechanical fix: what to do, where, and with what value.

    action: "insert-layer" | "set-param" | "remove-edge"
    target: ("edge", from, to) | ("after", layer) | ("param", layer, field)
            | ("metadata", key)
    value:  inserted kind, or the proposed field value
    """

    action: str
    target: tuple
    value: object

    def to_dict(self) -> dict:
        value = self.value
        if isinstance(value, tuple):
            value = list(value)
        return {"action": self.action, "target": list(self.target), "value": value}


@dataclass(frozen=True)
class Diagnostic:
    rule_id: str
    severity: str
    layer_ids: tuple[str, ...]
    message: str
    suggestion: Suggestion | None = None

    def to_dict(self) -> dict:
        out = {
            "rule_id": self.rule_id,
            "severity": self.severity,
            "layer_ids": list(self.layer_ids),
            "message": self.message,
        }
        if self.suggestion is not None:
            out["suggestion"] = self.suggestion.to_dict()
        return out


def render_diagnostic(d: Diagnostic) -> str:
    """One-line form shared by the CLI and service logs."""
    ids = ",".join(d.layer_ids) if d.layer_ids else "-"
    return f"{d.rule_id} {d.severity} {ids} {d.message}"


def _traces_back_to_spatial(model: Model, start: str) -> bool:
    """Does rank-3 data reach `start`'s output, judged structurally?

    Walks backwards through rank-preserving kinds; conv/pool ancestors
    mean yes, Flatten/Dense ancestors mean no on that path. Input is
    unknown without shapes and counts as no.
    """
    by_id = model.layer_map()
    seen: set[str] = set()
    stack = [start]
    while stack:
        lid = stack.pop()
        if lid in seen:
            continue
        seen.add(lid)
        kind = by_id[lid].kind
        if kind in _SPATIAL_PRODUCERS:
            return True
        if kind in _FLAT_PRODUCERS or kind == "Input":
            continue
        if kind in _RANK_PRESERVING:
            stack.extend(model.predecessors(lid))
    return False


def lint(model: Model, shapes: dict[str, TensorShape] | None = None) -> list[Diagnostic]:
    """Apply the rule catalog; problems come back as diagnostics, never raises.

    Deterministic: equal inputs yield identical lists, sorted by
    (rule id, first layer id).
    """
    found: list[Diagnostic] = []

    cycle = ir.find_cycle(model)
    if cycle:
        found.append(
            Diagnostic("L1", "error", tuple(cycle), "layers form a cycle")
        )

    inputs = model.input_ids()
    if not inputs:
        found.append(Diagnostic("L2", "error", (), "model has no Input layer"))
    if model.layers and not model.terminal_ids():
        found.append(Diagnostic("L2", "error", (), "model has no terminal layer"))

    if inputs:
        reachable = ir.reachable_from_inputs(model)
        for lyr in model.layers:
            if lyr.id not in reachable:
                found.append(
                    Diagnostic(
                        "L3",
                        "warning",
                        (lyr.id,),
                        "layer is not reachable from any Input",
                    )
                )

    for lyr in model.layers:
        if lyr.kind != "Dense":
            continue
        for pred in model.predecessors(lyr.id):
            spatial = False
            if shapes and pred in shapes:
                spatial = shapes[pred].rank == 3
            else:
                spatial = _traces_back_to_spatial(model, pred)
            if spatial:
                found.append(
                    Diagnostic(
                        "L4",
                        "error",
                        (pred, lyr.id),
                        f"Dense layer {lyr.id!r} receives rank-3 input from "
                        f"{pred!r} without an intervening Flatten",
                        suggestion=Suggestion("insert-layer", ("edge", pred, lyr.id), "Flatten"),
                    )
                )

    for lyr in model.layers:
        if lyr.kind != "Dropout":
            continue
        rate = lyr.params.rate
        if rate == 0:
            found.append(
                Diagnostic(
                    "L5",
                    "warning",
                    (lyr.id,),
                    "dropout rate 0 is a no-op",
                    suggestion=Suggestion(
                        "set-param", ("param", lyr.id, "rate"), DEFAULT_DROPOUT_RATE
                    ),
                )
            )
        elif rate < 0 or rate >= 1:
            found.append(
                Diagnostic(
                    "L5",
                    "error",
                    (lyr.id,),
                    f"dropout rate {rate} is outside (0, 1)",
                    suggestion=Suggestion(
                        "set-param", ("param", lyr.id, "rate"), DEFAULT_DROPOUT_RATE
                    ),
                )
            )

    if shapes:
        for lyr in model.layers:
            if lyr.kind not in ("Conv2D", "MaxPool2D", "AvgPool2D"):
                continue
            preds = model.predecessors(lyr.id)
            if len(preds) != 1 or preds[0] not in shapes or shapes[preds[0]].rank != 3:
                continue
            h, w, _ = shapes[preds[0]].dims
            kh, kw = lyr.params.kernel
            ph, pw = lyr.params.pad
            if kh > h + 2 * ph or kw > w + 2 * pw:
                found.append(
                    Diagnostic(
                        "L6",
                        "error",
                        (lyr.id,),
                        f"kernel {kh}x{kw} exceeds padded input {h}x{w} (pad {ph},{pw})",
                        suggestion=Suggestion(
                            "set-param",
                            ("param", lyr.id, "kernel"),
                            (min(kh, h + 2 * ph), min(kw, w + 2 * pw)),
                        ),
                    )
                )

    for lyr in model.layers:
        is_softmax = lyr.kind == "Softmax" or (
            lyr.kind == "Activation" and lyr.params.fn == "softmax"
        )
        if is_softmax and model.successors(lyr.id):
            found.append(
                Diagnostic(
                    "L7",
                    "warning",
                    (lyr.id,),
                    "softmax output feeds further layers; expected at the end",
                )
            )

    if shapes:
        for lyr in model.layers:
            if lyr.kind != "Concat":
                continue
            preds = model.predecessors(lyr.id)
            pshapes = [shapes[p] for p in preds if p in shapes]
            if len(pshapes) != len(preds) or len(pshapes) < 2:
                continue
            ranks = {s.rank for s in pshapes}
            heads = {s.dims[:-1] for s in pshapes}
            if len(ranks) > 1 or len(heads) > 1:
                found.append(
                    Diagnostic(
                        "L8",
                        "error",
                        (lyr.id,),
                        "Concat inputs disagree outside the channel axis: "
                        + ", ".join(str(s) for s in pshapes),
                    )
                )

    if LEARNING_RATE_KEY in model.metadata:
        raw = model.metadata[LEARNING_RATE_KEY]
        lo, hi = LEARNING_RATE_RANGE
        try:
            lr = float(raw)
        except ValueError:
            lr = None
        if lr is None or not (lo <= lr <= hi):
            found.append(
                Diagnostic(
                    "L9",
                    "warning",
                    (),
                    f"learning rate {raw!r} outside [{lo:g}, {hi:g}]",
                    suggestion=Suggestion(
                        "set-param", ("metadata", LEARNING_RATE_KEY), str(DEFAULT_LEARNING_RATE)
                    ),
                )
            )

    found.sort(key=lambda d: (d.rule_id, d.layer_ids[0] if d.layer_ids else "", d.message))
    return found


def has_errors(diagnostics: list[Diagnostic]) -> bool:
    return any(d.severity == "error" for d in diagnostics)


# ---------------------------------------------------------------------------
# Suggestions


def _conv_run_lengths(model: Model) -> dict[str, int]:
    """Longest consecutive-Conv2D chain ending at each conv.

    Convs count as consecutive when joined directly or through
    Activation/Dropout only; pooling, normalization, or any merge breaks
    the run.
    """
    by_id = model.layer_map()
    passthrough = {"Activation", "Dropout"}
    run: dict[str, int] = {}

    def conv_preds(lid: str, seen: frozenset[str]) -> list[str]:
        out = []
        for p in model.predecessors(lid):
            if p in seen:
                continue
            kind = by_id[p].kind
            if kind == "Conv2D":
                out.append(p)
            elif kind in passthrough:
                out.extend(conv_preds(p, seen | {p}))
        return out

    for lid in ir.serialization_order(model):
        if by_id[lid].kind != "Conv2D":
            continue
        prior = [run[p] for p in conv_preds(lid, frozenset({lid})) if p in run]
        run[lid] = 1 + max(prior, default=0)
    return run


def _followed_by_batchnorm(model: Model, lid: str) -> bool:
    """Is there a BatchNorm downstream of lid before the next conv/pool?"""
    by_id = model.layer_map()
    passthrough = {"Activation", "Dropout"}
    seen: set[str] = set()
    stack = list(model.successors(lid))
    while stack:
        nxt = stack.pop()
        if nxt in seen:
            continue
        seen.add(nxt)
        kind = by_id[nxt].kind
        if kind == "BatchNorm":
            return True
        if kind in passthrough:
            stack.extend(model.successors(nxt))
    return False


def suggest_hyperparams(model: Model, diagnostics: list[Diagnostic]) -> list[Suggestion]:
    """Concrete fixes: every rule-paired suggestion plus two standing rules.

    A model without a learning rate gets the documented default 1e-3; a
    run of CONV_RUN_THRESHOLD convolutions without normalization gets a
    BatchNorm after the run's closing conv.
    """
    out = [d.suggestion for d in diagnostics if d.suggestion is not None]
    if LEARNING_RATE_KEY not in model.metadata:
        out.append(
            Suggestion("set-param", ("metadata", LEARNING_RATE_KEY), str(DEFAULT_LEARNING_RATE))
        )
    runs = _conv_run_lengths(model)
    for lid in sorted(runs):
        if (
            runs[lid] > 0
            and runs[lid] % CONV_RUN_THRESHOLD == 0
            and not _followed_by_batchnorm(model, lid)
        ):
            out.append(Suggestion("insert-layer", ("after", lid), "BatchNorm"))
    return out


def _fresh_id(model: Model, base: str) -> str:
    ids = {l.id for l in model.layers}
    if base not in ids:
        return base
    n = 2
    while f"{base}_{n}" in ids:
        n += 1
    return f"{base}_{n}"


def apply_suggestion(model: Model, s: Suggestion) -> Model:
    """Apply one suggestion, returning the repaired model."""
    if s.action == "insert-layer" and s.target[0] == "edge":
        _, src, dst = s.target
        new_id = _fresh_id(model, f"{str(s.value).lower()}_fix")
        node = ir.layer(new_id, str(s.value))
        out = ir.disconnect(model, src, dst)
        out = ir.add_layer(out, node)
        out = ir.connect(out, src, new_id)
        return ir.connect(out, new_id, dst)

    if s.action == "insert-layer" and s.target[0] == "after":
        _, src = s.target
        new_id = _fresh_id(model, f"{str(s.value).lower()}_fix")
        node = ir.layer(new_id, str(s.value))
        out = ir.add_layer(model, node)
        for succ in model.successors(src):
            out = ir.disconnect(out, src, succ)
            out = ir.connect(out, new_id, succ)
        return ir.connect(out, src, new_id)

    if s.action == "set-param" and s.target[0] == "param":
        _, lid, field_name = s.target
        by_id = model.layer_map()
        if lid not in by_id:
            raise ir.UnknownId(f"no layer {lid!r}")
        lyr = by_id[lid]
        new_params = replace(lyr.params, **{field_name: s.value})
        new_layer = replace(lyr, params=new_params)
        layers = tuple(new_layer if l.id == lid else l for l in model.layers)
        return replace(model, layers=layers)

    if s.action == "set-param" and s.target[0] == "metadata":
        return ir.set_metadata(model, s.target[1], str(s.value))

    if s.action == "remove-edge":
        _, src, dst = s.target
        return ir.disconnect(model, src, dst)

    raise ValueError(f"unsupported suggestion {s.action!r} on {s.target!r}")
