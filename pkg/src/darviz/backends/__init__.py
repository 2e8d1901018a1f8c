from .codegen import (
    CodegenError,
    CodegenTarget,
    LintErrorsPresent,
    SourceArtifact,
    UnrepresentableConstruct,
    emit,
    export_keras_config,
)
from .weights import (
    IncompatibleLayouts,
    LAYOUT_TAGS,
    TensorEntry,
    WeightsError,
    WeightsManifest,
    apply_permutation,
    check_weights_compat,
    expected_tensors,
    layout_permutation,
    manifest_from_json,
    manifest_to_json,
    read_tensor,
    tensor_entry,
    write_weights,
)

__all__ = [
    "CodegenError",
    "CodegenTarget",
    "IncompatibleLayouts",
    "LAYOUT_TAGS",
    "LintErrorsPresent",
    "SourceArtifact",
    "TensorEntry",
    "UnrepresentableConstruct",
    "WeightsError",
    "WeightsManifest",
    "apply_permutation",
    "check_weights_compat",
    "emit",
    "expected_tensors",
    "export_keras_config",
    "layout_permutation",
    "manifest_from_json",
    "manifest_to_json",
    "read_tensor",
    "tensor_entry",
    "write_weights",
]
