from .caffe import import_caffe, parse_prototxt
from .common import (
    DanglingBlob,
    FrontendError,
    ImportReport,
    ImportSyntaxError,
    UnsupportedClass,
    UnsupportedLayer,
    UnsupportedPadding,
)
from .keras import import_keras_json

__all__ = [
    "DanglingBlob",
    "FrontendError",
    "ImportReport",
    "ImportSyntaxError",
    "UnsupportedClass",
    "UnsupportedLayer",
    "UnsupportedPadding",
    "import_caffe",
    "import_keras_json",
    "parse_prototxt",
]
