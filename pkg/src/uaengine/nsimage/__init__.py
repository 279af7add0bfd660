"""Namespace image: compiler, loader, lookups and the VM port."""

from .compiler import CompileResult, compile_model
from .image import ACCESS_READ, ACCESS_WRITE, Attr, ImageError, NamespaceImage, NodeRecord, verify
from .model import (
    DeviceModel,
    DuplicateNodeId,
    ModelError,
    ModelSyntaxError,
    UnresolvedDataType,
    UnresolvedReference,
    ValueTypeMismatch,
    bundled_model_path,
    load_model,
    parse_model,
)
from .port import NamespacePort, PortError

DEVICE_LAST_NODE = "ns=1;i=1003"


def build_default_image() -> NamespaceImage:
    """Compile the bundled acceptance model (minimal ns0 + three Int32 values)."""
    return NamespaceImage(compile_model(load_model(bundled_model_path("device.model"))).image)


__all__ = [
    "ACCESS_READ",
    "ACCESS_WRITE",
    "Attr",
    "CompileResult",
    "DEVICE_LAST_NODE",
    "DeviceModel",
    "DuplicateNodeId",
    "ImageError",
    "ModelError",
    "ModelSyntaxError",
    "NamespaceImage",
    "NamespacePort",
    "NodeRecord",
    "PortError",
    "UnresolvedDataType",
    "UnresolvedReference",
    "ValueTypeMismatch",
    "build_default_image",
    "bundled_model_path",
    "compile_model",
    "load_model",
    "parse_model",
    "verify",
]
