"""Text format for device information models.

One statement per line, ``#`` starts a comment::

    namespace urn:example:device
    include ns0.model
    Variable ns=1;i=1003 browse=1:Value3 datatype=i=6 access=rw value=0 ref=HasComponent<ns=1;i=1000

Node lines are ``<NodeClass> <NodeId> key=value ...``.  Keys: ``browse``,
``display``, ``datatype``, ``access`` (``r``, ``w``, ``rw``), ``value``,
``capacity`` (string slots), ``super`` (HasSubtype parent), and repeatable
``ref=Type>target`` / ``ref=Type<source``.  Values may be quoted.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..codec import NodeId, QualifiedName

NS0_URI = "http://opcfoundation.org/UA/"

NODE_CLASSES = {
    "Object": 1,
    "Variable": 2,
    "Method": 4,
    "ObjectType": 8,
    "VariableType": 16,
    "ReferenceType": 32,
    "DataType": 64,
    "View": 128,
}
ACCESS = {"": 0, "r": 1, "w": 2, "rw": 3}


class ModelError(Exception):
    def __init__(self, message: str, source: str = "", line: int = 0):
        where = f"{source}:{line}: " if line else ""
        super().__init__(where + message)
        self.line = line


class ModelSyntaxError(ModelError):
    pass


class DuplicateNodeId(ModelError):
    pass


class UnresolvedDataType(ModelError):
    pass


class ValueTypeMismatch(ModelError):
    pass


class UnresolvedReference(ModelError):
    pass


@dataclass
class RefDecl:
    type_name: str
    inverse: bool
    target: NodeId


@dataclass
class NodeDecl:
    node_class: str
    node_id: NodeId
    browse_name: QualifiedName
    display_name: str
    data_type: NodeId | None = None
    access: int = 0
    value: str | None = None
    capacity: int | None = None
    refs: list[RefDecl] = field(default_factory=list)
    source: str = ""
    line: int = 0


@dataclass
class DeviceModel:
    namespaces: list[str] = field(default_factory=lambda: [NS0_URI])
    nodes: list[NodeDecl] = field(default_factory=list)


def bundled_model_path(name: str) -> Path:
    return Path(str(resources.files("uaengine.nsimage") / "data" / name))


def _parse_browse(text: str) -> QualifiedName:
    ns, sep, name = text.partition(":")
    if sep and ns.isdigit():
        return QualifiedName(int(ns), name)
    return QualifiedName(0, text)


def _parse_ref(text: str, where: tuple[str, int]) -> RefDecl:
    for sep, inverse in ((">", False), ("<", True)):
        if sep in text:
            type_name, _, target = text.partition(sep)
            try:
                return RefDecl(type_name, inverse, NodeId.parse(target))
            except ValueError as exc:
                raise ModelSyntaxError(str(exc), *where) from None
    raise ModelSyntaxError(f"reference {text!r} needs '>' or '<'", *where)


def _parse_node(tokens: list[str], where: tuple[str, int]) -> NodeDecl:
    node_class = tokens[0]
    if node_class not in NODE_CLASSES:
        raise ModelSyntaxError(f"unknown statement or node class {node_class!r}", *where)
    if len(tokens) < 2:
        raise ModelSyntaxError("node line needs a NodeId", *where)
    try:
        node_id = NodeId.parse(tokens[1])
    except ValueError as exc:
        raise ModelSyntaxError(str(exc), *where) from None
    attrs: dict[str, str] = {}
    refs: list[RefDecl] = []
    for tok in tokens[2:]:
        key, sep, val = tok.partition("=")
        if not sep:
            raise ModelSyntaxError(f"expected key=value, got {tok!r}", *where)
        if key == "ref":
            refs.append(_parse_ref(val, where))
        elif key == "super":
            refs.append(_parse_ref("HasSubtype<" + val, where))
        elif key in ("browse", "display", "datatype", "access", "value", "capacity"):
            if key in attrs:
                raise ModelSyntaxError(f"duplicate key {key!r}", *where)
            attrs[key] = val
        else:
            raise ModelSyntaxError(f"unknown key {key!r}", *where)
    if "browse" not in attrs:
        raise ModelSyntaxError("missing browse=", *where)
    browse = _parse_browse(attrs["browse"])
    decl = NodeDecl(node_class, node_id, browse, attrs.get("display", browse.name or ""), refs=refs)
    decl.source, decl.line = where
    if node_class in ("Variable", "VariableType"):
        try:
            decl.data_type = NodeId.parse(attrs.get("datatype", "i=24"))
        except ValueError as exc:
            raise ModelSyntaxError(str(exc), *where) from None
        access = attrs.get("access", "r")
        if access not in ACCESS:
            raise ModelSyntaxError(f"access must be one of r, w, rw; got {access!r}", *where)
        decl.access = ACCESS[access]
        decl.value = attrs.get("value")
        if "capacity" in attrs:
            if not attrs["capacity"].isdigit():
                raise ModelSyntaxError("capacity must be a non-negative integer", *where)
            decl.capacity = int(attrs["capacity"])
    elif {"datatype", "access", "value", "capacity"} & attrs.keys():
        raise ModelSyntaxError(f"{node_class} nodes carry no value attributes", *where)
    return decl


def parse_model(text: str, source: str = "<model>", base_dir: Path | None = None, _seen: set | None = None) -> DeviceModel:
    """Parse model text, expanding ``include`` lines depth-first."""
    model = DeviceModel()
    _parse_into(model, text, source, base_dir, _seen if _seen is not None else set())
    return model


def _parse_into(model: DeviceModel, text: str, source: str, base_dir: Path | None, seen: set) -> None:
    for lineno, raw in enumerate(text.splitlines(), 1):
        where = (source, lineno)
        try:
            tokens = shlex.split(raw, comments=True)
        except ValueError as exc:
            raise ModelSyntaxError(str(exc), *where) from None
        if not tokens:
            continue
        head = tokens[0]
        if head == "namespace":
            if len(tokens) != 2:
                raise ModelSyntaxError("namespace takes one URI", *where)
            if tokens[1] not in model.namespaces:
                model.namespaces.append(tokens[1])
        elif head == "include":
            if len(tokens) != 2:
                raise ModelSyntaxError("include takes one file name", *where)
            path = _resolve_include(tokens[1], base_dir)
            if path is None:
                raise ModelSyntaxError(f"include {tokens[1]!r} not found", *where)
            key = path.resolve()
            if key in seen:
                continue
            seen.add(key)
            _parse_into(model, path.read_text(encoding="utf-8"), str(path.name), path.parent, seen)
        else:
            model.nodes.append(_parse_node(tokens, where))


def _resolve_include(name: str, base_dir: Path | None) -> Path | None:
    candidates = []
    if base_dir is not None:
        candidates.append(base_dir / name)
    candidates.append(bundled_model_path(name))
    for c in candidates:
        if c.is_file():
            return c
    return None


def load_model(path: str | Path) -> DeviceModel:
    path = Path(path)
    return parse_model(path.read_text(encoding="utf-8"), path.name, path.parent, {path.resolve()})
