"""Compile a device model into a namespace image."""

from __future__ import annotations

import struct
from dataclasses import dataclass

from ..codec import (
    CodecError,
    LocalizedText,
    NodeId,
    QualifiedName,
    Variant,
    VariantType,
    encode_value,
)
from .image import (
    FLAG_DISPLAY_IS_BROWSE,
    FLAG_VARIABLE,
    HEADER,
    INDEX_ENTRY,
    MAGIC,
    VERSION,
)
from .model import (
    NODE_CLASSES,
    DeviceModel,
    DuplicateNodeId,
    NodeDecl,
    UnresolvedDataType,
    UnresolvedReference,
    ValueTypeMismatch,
)

DEFAULT_CAPACITY = 32

# DataType NodeIds (namespace 0) that map straight onto a Variant type.
_BUILTIN_TYPES = {
    1: VariantType.Boolean,
    2: VariantType.SByte,
    3: VariantType.Byte,
    4: VariantType.Int16,
    5: VariantType.UInt16,
    6: VariantType.Int32,
    7: VariantType.UInt32,
    10: VariantType.Float,
    11: VariantType.Double,
    12: VariantType.String,
    13: VariantType.DateTime,
    15: VariantType.ByteString,
    17: VariantType.NodeId,
    20: VariantType.QualifiedName,
    21: VariantType.LocalizedText,
}
_ENUMERATION = 29

_FIXED_SIZE = {
    VariantType.Boolean: 1,
    VariantType.SByte: 1,
    VariantType.Byte: 1,
    VariantType.Int16: 2,
    VariantType.UInt16: 2,
    VariantType.Int32: 4,
    VariantType.UInt32: 4,
    VariantType.Float: 4,
    VariantType.Double: 8,
    VariantType.DateTime: 8,
}


@dataclass
class CompileResult:
    image: bytes
    sections: dict[str, int]
    node_count: int

    def report(self) -> str:
        lines = [f"{name:<10} {size:>7}" for name, size in self.sections.items()]
        lines.append(f"{'total':<10} {sum(self.sections.values()):>7}")
        return "\n".join(lines)


def _slot_size(vt: VariantType | None, capacity: int) -> int:
    if vt is None:
        return 1
    if vt in _FIXED_SIZE:
        return 1 + _FIXED_SIZE[vt]
    if vt in (VariantType.String, VariantType.ByteString):
        return 1 + 4 + capacity
    if vt is VariantType.LocalizedText:
        return 1 + 1 + 2 * (4 + capacity)
    if vt is VariantType.QualifiedName:
        return 1 + 2 + 4 + capacity
    return 1 + 1 + 2 + 4 + capacity  # NodeId, string form worst case


def _parse_literal(vt: VariantType, text: str | None) -> Variant:
    if text is None:
        defaults = {
            VariantType.Boolean: False,
            VariantType.Float: 0.0,
            VariantType.Double: 0.0,
            VariantType.String: None,
            VariantType.ByteString: None,
            VariantType.NodeId: NodeId(),
            VariantType.QualifiedName: QualifiedName(),
            VariantType.LocalizedText: LocalizedText(),
        }
        return Variant(vt, defaults.get(vt, 0))
    if vt is VariantType.Boolean:
        if text not in ("true", "false"):
            raise ValueError("boolean literal must be true or false")
        return Variant(vt, text == "true")
    if vt in (VariantType.Float, VariantType.Double):
        return Variant(vt, float(text))
    if vt is VariantType.String:
        return Variant(vt, text)
    if vt is VariantType.ByteString:
        return Variant(vt, bytes.fromhex(text))
    if vt is VariantType.NodeId:
        return Variant(vt, NodeId.parse(text))
    if vt is VariantType.QualifiedName:
        ns, sep, name = text.partition(":")
        return Variant(vt, QualifiedName(int(ns), name) if sep and ns.isdigit() else QualifiedName(0, text))
    if vt is VariantType.LocalizedText:
        return Variant(vt, LocalizedText(text))
    return Variant(vt, int(text, 0))


def _encode_u16_string(buf: bytearray, text: str) -> None:
    raw = text.encode("utf-8")
    buf += struct.pack("<H", len(raw))
    buf += raw


class _Compiler:
    def __init__(self, model: DeviceModel):
        self.model = model
        self.nodes: dict[NodeId, NodeDecl] = {}
        for decl in model.nodes:
            if decl.node_id in self.nodes:
                raise DuplicateNodeId(f"NodeId {decl.node_id} defined twice", decl.source, decl.line)
            if decl.node_id.namespace >= len(model.namespaces):
                raise UnresolvedReference(f"namespace index {decl.node_id.namespace} not declared", decl.source, decl.line)
            self.nodes[decl.node_id] = decl
        self.ref_types = {
            d.browse_name.name: d.node_id for d in model.nodes if d.node_class == "ReferenceType"
        }
        self.supertype = {}
        for d in model.nodes:
            for ref in d.refs:
                if ref.type_name == "HasSubtype" and ref.inverse:
                    self.supertype[d.node_id] = ref.target

    def value_type(self, decl: NodeDecl) -> VariantType | None:
        dt = decl.data_type
        target = self.nodes.get(dt)
        if target is None or target.node_class != "DataType" or dt.namespace != 0:
            raise UnresolvedDataType(f"data type {dt} is not a namespace-0 DataType node", decl.source, decl.line)
        seen = set()
        while dt is not None and dt not in seen:
            seen.add(dt)
            if dt.namespace == 0 and dt.identifier in _BUILTIN_TYPES:
                return _BUILTIN_TYPES[dt.identifier]
            if dt.namespace == 0 and dt.identifier == _ENUMERATION:
                return VariantType.Int32
            dt = self.supertype.get(dt)
        return None

    def check_refs(self, decl: NodeDecl) -> None:
        for ref in decl.refs:
            if ref.type_name not in self.ref_types:
                raise UnresolvedReference(f"unknown reference type {ref.type_name!r}", decl.source, decl.line)
            if ref.target not in self.nodes:
                raise UnresolvedReference(f"reference target {ref.target} not in model", decl.source, decl.line)

    def initial_value(self, decl: NodeDecl, vt: VariantType | None, capacity: int) -> bytes:
        if vt is None:
            if decl.value is not None:
                raise ValueTypeMismatch(f"data type {decl.data_type} holds no scalar value", decl.source, decl.line)
            return encode_value(Variant())
        try:
            value = _parse_literal(vt, decl.value)
            raw = encode_value(value)
        except (ValueError, CodecError) as exc:
            raise ValueTypeMismatch(f"value {decl.value!r} is not a valid {vt.name}: {exc}", decl.source, decl.line) from None
        if len(raw) > _slot_size(vt, capacity):
            raise ValueTypeMismatch(f"value {decl.value!r} exceeds capacity {capacity}", decl.source, decl.line)
        return raw

    def compile(self) -> CompileResult:
        decls = sorted(self.nodes.values(), key=lambda d: d.node_id.sort_key())
        ns_table = bytearray()
        for uri in self.model.namespaces:
            _encode_u16_string(ns_table, uri)
        index_offset = HEADER.size + len(ns_table)
        records_offset = index_offset + INDEX_ENTRY.size * len(decls)

        # Slot offsets depend on the record section length, and record length
        # does not depend on slot offsets (fixed u32), so lay records out first.
        slot_layout = []
        for decl in decls:
            self.check_refs(decl)
            if decl.node_class in ("Variable", "VariableType"):
                vt = self.value_type(decl)
                if vt is None and decl.capacity is not None:
                    raise ValueTypeMismatch("capacity given for a non-scalar data type", decl.source, decl.line)
                cap = decl.capacity if decl.capacity is not None else DEFAULT_CAPACITY
                raw = self.initial_value(decl, vt, cap)
                slot_layout.append((vt, raw, _slot_size(vt, cap)))
            else:
                slot_layout.append(None)

        records = [self._record(decl, slot, 0) for decl, slot in zip(decls, slot_layout)]
        values_offset = records_offset + sum(len(r) for r in records)
        values = bytearray()
        index = bytearray()
        body = bytearray()
        for decl, slot in zip(decls, slot_layout):
            slot_off = 0
            if slot is not None:
                _, raw, size = slot
                slot_off = values_offset + len(values)
                values += raw.ljust(size, b"\x00")
            rec_off = records_offset + len(body)
            nid = decl.node_id
            num = nid.identifier if isinstance(nid.identifier, int) else 0
            index += INDEX_ENTRY.pack(nid.namespace, nid.kind_rank, 0, num, rec_off)
            body += self._record(decl, slot, slot_off)
        total = values_offset + len(values)
        header = HEADER.pack(MAGIC, VERSION, len(self.model.namespaces), len(decls), index_offset, total, values_offset)
        image = header + ns_table + index + body + values
        assert len(image) == total
        sections = {
            "header": len(header),
            "namespaces": len(ns_table),
            "index": len(index),
            "records": len(body),
            "values": len(values),
        }
        return CompileResult(bytes(image), sections, len(decls))

    def _record(self, decl: NodeDecl, slot, slot_off: int) -> bytes:
        buf = bytearray(encode_value(decl.node_id))
        flags = 0
        if decl.display_name == (decl.browse_name.name or ""):
            flags |= FLAG_DISPLAY_IS_BROWSE
        if slot is not None:
            flags |= FLAG_VARIABLE
        buf += bytes([NODE_CLASSES[decl.node_class], flags, decl.browse_name.namespace & 0xFF])
        _encode_u16_string(buf, decl.browse_name.name or "")
        if not flags & FLAG_DISPLAY_IS_BROWSE:
            _encode_u16_string(buf, decl.display_name)
        if slot is not None:
            vt, _, size = slot
            buf += encode_value(decl.data_type)
            buf += struct.pack("<BBIH", decl.access, int(vt) if vt is not None else 0, slot_off, size)
        if len(decl.refs) > 255:
            raise ValueTypeMismatch("more than 255 references", decl.source, decl.line)
        buf.append(len(decl.refs))
        for ref in decl.refs:
            buf += encode_value(self.ref_types[ref.type_name])
            buf.append(1 if ref.inverse else 0)
            buf += encode_value(ref.target)
        return bytes(buf)


def compile_model(model: DeviceModel) -> CompileResult:
    """Validate ``model`` and emit its canonical image plus a size report."""
    return _Compiler(model).compile()
