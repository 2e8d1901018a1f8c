"""Built-in registry of canonical architectures as IR fixtures.

Fixtures ship as interchange-format JSON files next to this module,
so they double as format examples and as golden inputs for the rest of
the test suite. The registry is immutable; lookups hand out fresh
copies so caller mutations cannot corrupt it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .. import ir


class NotFound(Exception):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"no zoo model named {name!r}")


_DESCRIPTIONS = {
    "inception_block": "One inception module: four parallel branches joined by a channel concat",
    "lenet5": "Classic 7-level convolutional digit classifier (32x32x1 input)",
    "vgg16": "16 weighted layers: 13 convolutions in five blocks plus three dense layers",
    "vgg19": "19 weighted layers: 16 convolutions in five blocks plus three dense layers",
}


@dataclass(frozen=True)
class ZooEntry:
    name: str
    description: str
    input_shape: str
    model: ir.Model


def zoo_names() -> list[str]:
    return sorted(_DESCRIPTIONS)


def _read(name: str) -> str:
    try:
        return resources.files(__package__).joinpath(f"{name}.json").read_text("utf-8")
    except FileNotFoundError:
        raise NotFound(name) from None


def zoo_get(name: str) -> ir.Model:
    """Fetch a fixture by name; every call returns an independent copy."""
    if name not in _DESCRIPTIONS:
        raise NotFound(name)
    return ir.parse_ir(_read(name))


def _entry(name: str) -> ZooEntry:
    model = zoo_get(name)
    bindings = ir.input_bindings_from_metadata(model)
    shape = ", ".join(str(bindings[lid]) for lid in sorted(bindings))
    return ZooEntry(
        name=name,
        description=_DESCRIPTIONS[name],
        input_shape=shape,
        model=model,
    )


def zoo_list() -> list[ZooEntry]:
    """All fixtures, in stable alphabetical order."""
    return [_entry(name) for name in zoo_names()]
