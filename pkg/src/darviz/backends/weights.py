"""Weight-tensor layout conversion and manifest compatibility checks.

Weights travel as a directory holding ``manifest.json`` plus raw
little-endian f32 tensor files under ``tensors/``; the manifest names
each tensor, its shape, and its axis layout tag. Layout tags spell the
axis meaning per position (H height, W width, I input channels,
O output channels, C a lone channel/feature axis), so converting
between frameworks is a pure axis permutation.

Compatibility findings reuse the linter's Diagnostic type:

  W1  expected tensor missing from the manifest      error
  W2  tensor present but shaped wrong                error
  W3  tensor in the manifest that no layer expects   warning
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

from .. import ir
from ..linting import Diagnostic
from ..shapes import TensorShape

LAYOUT_TAGS = ("HWIO", "OIHW", "IO", "OI", "C")


class WeightsError(Exception):
    pass


class IncompatibleLayouts(WeightsError):
    def __init__(self, a: str, b: str):
        super().__init__(f"layouts {a!r} and {b!r} are not rank-compatible")


def layout_permutation(from_tag: str, to_tag: str) -> tuple[int, ...]:
    """Axis permutation converting from_tag order to to_tag order.

    new[i] = old[perm[i]]; composing with the inverse direction yields
    the identity.
    """
    for tag in (from_tag, to_tag):
        if tag not in LAYOUT_TAGS:
            raise WeightsError(f"unknown layout tag {tag!r}")
    if sorted(from_tag) != sorted(to_tag):
        raise IncompatibleLayouts(from_tag, to_tag)
    return tuple(from_tag.index(axis) for axis in to_tag)


def apply_permutation(shape: tuple[int, ...], perm: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(shape[p] for p in perm)


@dataclass(frozen=True)
class TensorEntry:
    name: str
    shape: tuple[int, ...]
    layout: str
    path: str
    dtype: str = "f32"
    byte_order: str = "little"

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(d) for d in self.shape))
        if self.layout not in LAYOUT_TAGS:
            raise WeightsError(f"unknown layout tag {self.layout!r}")
        if len(self.layout) != len(self.shape):
            raise WeightsError(
                f"tensor {self.name!r}: layout {self.layout} does not match "
                f"rank-{len(self.shape)} shape"
            )
        if any(d < 1 for d in self.shape):
            raise WeightsError(f"tensor {self.name!r}: shape extents must be >= 1")
        if self.dtype != "f32":
            raise WeightsError(f"tensor {self.name!r}: only f32 is supported")
        if self.byte_order != "little":
            raise WeightsError(f"tensor {self.name!r}: only little-endian is supported")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dtype": self.dtype,
            "shape": list(self.shape),
            "layout": self.layout,
            "path": self.path,
            "byte_order": self.byte_order,
        }


@dataclass(frozen=True)
class WeightsManifest:
    entries: tuple[TensorEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def by_name(self) -> dict[str, TensorEntry]:
        return {e.name: e for e in self.entries}


def manifest_to_json(manifest: WeightsManifest) -> str:
    doc = {"entries": [e.to_dict() for e in manifest.entries]}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def manifest_from_json(text: str) -> WeightsManifest:
    doc = json.loads(text)
    entries = [
        TensorEntry(
            name=e["name"],
            shape=tuple(e["shape"]),
            layout=e["layout"],
            path=e["path"],
            dtype=e.get("dtype", "f32"),
            byte_order=e.get("byte_order", "little"),
        )
        for e in doc["entries"]
    ]
    return WeightsManifest(tuple(entries))


def write_weights(directory: str, manifest: WeightsManifest, tensors: dict[str, list[float]]):
    """Write manifest.json and raw f32 little-endian tensor files."""
    os.makedirs(os.path.join(directory, "tensors"), exist_ok=True)
    with open(os.path.join(directory, "manifest.json"), "w", encoding="utf-8") as fh:
        fh.write(manifest_to_json(manifest))
    for entry in manifest.entries:
        values = tensors[entry.name]
        with open(os.path.join(directory, entry.path), "wb") as fh:
            fh.write(struct.pack(f"<{len(values)}f", *values))


def read_tensor(directory: str, entry: TensorEntry) -> list[float]:
    with open(os.path.join(directory, entry.path), "rb") as fh:
        raw = fh.read()
    count = len(raw) // 4
    return list(struct.unpack(f"<{count}f", raw))


def tensor_entry(name: str, shape: tuple[int, ...], layout: str) -> TensorEntry:
    safe = name.replace("/", "_")
    return TensorEntry(name=name, shape=shape, layout=layout, path=f"tensors/{safe}.bin")


# ---------------------------------------------------------------------------
# Compatibility checking

# canonical layout per tensor rank, matching the IR's channels-last view
_CANONICAL = {4: "HWIO", 2: "IO", 1: "C"}


def expected_tensors(model: ir.Model, shapes: dict[str, TensorShape]) -> dict[str, tuple]:
    """Tensor name -> (canonical shape, canonical layout) for weighted layers."""
    out: dict[str, tuple] = {}
    for lyr in model.layers:
        preds = model.predecessors(lyr.id)
        if lyr.kind == "Conv2D":
            cin = shapes[preds[0]].channels
            kh, kw = lyr.params.kernel
            out[f"{lyr.id}.kernel"] = ((kh, kw, cin, lyr.params.filters), "HWIO")
            out[f"{lyr.id}.bias"] = ((lyr.params.filters,), "C")
        elif lyr.kind == "Dense":
            fin = shapes[preds[0]].dims[0]
            out[f"{lyr.id}.kernel"] = ((fin, lyr.params.units), "IO")
            out[f"{lyr.id}.bias"] = ((lyr.params.units,), "C")
        elif lyr.kind == "BatchNorm":
            c = shapes[lyr.id].channels
            for part in ("gamma", "beta", "mean", "variance"):
                out[f"{lyr.id}.{part}"] = ((c,), "C")
    return out


def check_weights_compat(
    model: ir.Model, shapes: dict[str, TensorShape], manifest: WeightsManifest
) -> list[Diagnostic]:
    """Compare a manifest against the shapes the model's layers need.

    Entry shapes are normalized to the canonical layout before
    comparison, so an OIHW kernel of the right size passes.
    """
    expected = expected_tensors(model, shapes)
    present = manifest.by_name()
    found: list[Diagnostic] = []

    def owner(name: str) -> tuple[str, ...]:
        lid = name.rsplit(".", 1)[0]
        return (lid,) if lid in model.layer_map() else ()

    for name in sorted(expected):
        exp_shape, exp_layout = expected[name]
        if name not in present:
            found.append(
                Diagnostic("W1", "error", owner(name), f"missing tensor {name!r}")
            )
            continue
        entry = present[name]
        try:
            perm = layout_permutation(entry.layout, exp_layout)
        except WeightsError:
            found.append(
                Diagnostic(
                    "W2",
                    "error",
                    owner(name),
                    f"tensor {name!r}: layout {entry.layout} has the wrong rank "
                    f"(expected {exp_layout})",
                )
            )
            continue
        normalized = apply_permutation(entry.shape, perm)
        if normalized != exp_shape:
            found.append(
                Diagnostic(
                    "W2",
                    "error",
                    owner(name),
                    f"tensor {name!r}: shape {entry.shape} in {entry.layout} "
                    f"normalizes to {normalized}, expected {exp_shape}",
                )
            )

    for name in sorted(present):
        if name not in expected:
            found.append(
                Diagnostic("W3", "warning", owner(name), f"unexpected tensor {name!r}")
            )

    found.sort(key=lambda d: (d.rule_id, d.message))
    return found
