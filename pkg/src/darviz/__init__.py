"""Platform-neutral model architecture toolkit.

A model is represented as a DAG of typed layers (the interchange
format in `ir`), statically checked (`shapes`, `linting`), importable
from foreign formats (`frontends`), emittable as framework source
(`backends`), and served over HTTP (`service`) for interactive
designers. `zoo` ships canonical architectures as fixtures and
`traces` lints training logs for early fault signs.
"""

from . import backends, frontends, ir, linting, shapes, store, traces, zoo
from .ir import (
    Layer,
    Model,
    TensorShape,
    layer,
    parse_ir,
    serialize_ir,
)

__version__ = "0.1.0"

__all__ = [
    "Layer",
    "Model",
    "TensorShape",
    "backends",
    "frontends",
    "ir",
    "layer",
    "linting",
    "parse_ir",
    "serialize_ir",
    "shapes",
    "store",
    "traces",
    "zoo",
    "__version__",
]
