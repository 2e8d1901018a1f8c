"""Shared import-report type and error hierarchy for format importers."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..ir import Model


class FrontendError(Exception):
    pass


class ImportSyntaxError(FrontendError):
    """Input text does not match the expected grammar."""

    def __init__(self, line: int, expected: str):
        self.line = line
        self.expected = expected
        super().__init__(f"line {line}: expected {expected}")


class UnsupportedLayer(FrontendError):
    def __init__(self, layer_type: str):
        self.layer_type = layer_type
        super().__init__(f"unsupported layer type {layer_type!r}")


class DanglingBlob(FrontendError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"bottom {name!r} references no producer")


class UnsupportedClass(FrontendError):
    def __init__(self, class_name: str):
        self.class_name = class_name
        super().__init__(f"unsupported layer class {class_name!r}")


class UnsupportedPadding(FrontendError):
    def __init__(self, detail: str):
        self.detail = detail
        super().__init__(f"unsupported padding: {detail}")


@dataclass(frozen=True)
class ImportReport:
    """Result of an import: the model plus anything noteworthy.

    notes records lossless-but-reshaped constructs (materialized
    in-place layers, ignored cosmetic fields); skipped stays empty in
    this version because unsupported constructs raise instead.
    """

    model: Model
    notes: tuple[str, ...] = ()
    skipped: tuple[str, ...] = ()


def sanitize_id(name: str, taken: set[str]) -> str:
    """Map an arbitrary foreign layer name onto the IR id alphabet, uniquely."""
    cleaned = "".join(
        c if ((c.isascii() and c.isalnum()) or c in "_./-") else "_" for c in name
    )
    if not cleaned:
        cleaned = "layer"
    base = cleaned
    n = 2
    while cleaned in taken:
        cleaned = f"{base}_{n}"
        n += 1
    taken.add(cleaned)
    return cleaned
