"""Compact binary namespace image: layout, verification and lookups.

Layout (little-endian)::

    header    "NSIM" u16 version u16 nsCount u32 nodeCount u32 indexOffset
              u32 totalSize u32 valuesOffset
    ns table  nsCount x (u16 length, UTF-8 URI)
    index     nodeCount x 12 bytes: u16 ns, u8 kind, u8 0, u32 numeric id, u32 record offset
    records   packed node records, in index order
    values    fixed-size value slots (one encoded Variant each, zero padded)

A record is the NodeId in its shortest wire form, u8 nodeClass, u8 flags,
the BrowseName (u8 ns, u16 length, UTF-8), the DisplayName text unless flag
0x01 says it equals the browse name, a variable part when flag 0x02 is set
(DataType NodeId, u8 AccessLevel, u8 value type, u32 slot offset, u16 slot
length), and u8 reference count followed by (type NodeId, u8 inverse,
target NodeId) triples.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

from ..codec import (
    CodecError,
    LocalizedText,
    NodeId,
    QualifiedName,
    Reader,
    StatusCode,
    Variant,
    VariantType,
    decode_value,
    encode_value,
)
from ..codec.binary import read_nodeid

MAGIC = b"NSIM"
VERSION = 1
HEADER = struct.Struct("<4sHHIIII")
INDEX_ENTRY = struct.Struct("<HBBII")

FLAG_DISPLAY_IS_BROWSE = 0x01
FLAG_VARIABLE = 0x02

ACCESS_READ = 0x01
ACCESS_WRITE = 0x02


class Attr:
    NodeId = 1
    NodeClass = 2
    BrowseName = 3
    DisplayName = 4
    Value = 13
    DataType = 14
    AccessLevel = 17
    # highest attribute id defined by the standard
    MAX_DEFINED = 27


READABLE_ATTRIBUTES = frozenset({Attr.NodeId, Attr.BrowseName, Attr.DisplayName, Attr.Value, Attr.DataType, Attr.AccessLevel})
VARIABLE_ONLY = frozenset({Attr.Value, Attr.DataType, Attr.AccessLevel})


class ImageError(Exception):
    """The byte sequence is not a usable namespace image."""


@dataclass
class Reference:
    type_id: NodeId
    inverse: bool
    target: NodeId


@dataclass
class NodeRecord:
    offset: int
    size: int
    node_id: NodeId
    node_class: int
    browse_name: QualifiedName
    display_name: str
    data_type: NodeId | None = None
    access: int = 0
    value_type: int = 0
    slot_offset: int = 0
    slot_length: int = 0
    refs: list[Reference] = field(default_factory=list)


def kind_of(nid: NodeId) -> int:
    return nid.kind_rank


def _read_u16_string(r: Reader) -> str:
    n = r.unpack(struct.Struct("<H"))
    return r.take(n).decode("utf-8")


def parse_record(data: bytes | bytearray, offset: int, end: int) -> NodeRecord:
    """Decode the record at ``offset``; raises on any out-of-bounds read."""
    r = Reader(memoryview(data)[:end], pos=offset)
    node_id = read_nodeid(r)
    node_class, flags = r.take(2)
    bns = r.take(1)[0]
    browse = QualifiedName(bns, _read_u16_string(r))
    display = browse.name if flags & FLAG_DISPLAY_IS_BROWSE else _read_u16_string(r)
    rec = NodeRecord(offset, 0, node_id, node_class, browse, display)
    if flags & FLAG_VARIABLE:
        rec.data_type = read_nodeid(r)
        rec.access, rec.value_type = r.take(2)
        rec.slot_offset, rec.slot_length = struct.unpack("<IH", r.take(6))
    count = r.take(1)[0]
    for _ in range(count):
        ref_type = read_nodeid(r)
        inverse = r.take(1)[0]
        rec.refs.append(Reference(ref_type, bool(inverse & 1), read_nodeid(r)))
    rec.size = r.pos - offset
    return rec


class NamespaceImage:
    """A loaded image.  Only value slots are ever modified after load."""

    def __init__(self, data: bytes | bytearray, check: bool = True):
        if check:
            problems = verify(data)
            if problems:
                raise ImageError("; ".join(problems[:5]))
        self.data = bytearray(data)
        (_, self.version, self.ns_count, self.node_count, self.index_offset,
         self.total_size, self.values_offset) = HEADER.unpack_from(self.data, 0)
        self.namespaces = _read_ns_table(self.data, self.ns_count, self.index_offset)
        self.last_probes = 0
        # bytes of image memory touched since the last reset; the simulator
        # turns these into memory transactions
        self.bytes_touched = 0

    @classmethod
    def from_file(cls, path) -> NamespaceImage:
        with open(path, "rb") as fh:
            return cls(fh.read())

    # --- index ------------------------------------------------------------

    def index_entry(self, k: int) -> tuple[int, int, int, int]:
        ns, kind, _, num, off = INDEX_ENTRY.unpack_from(self.data, self.index_offset + k * INDEX_ENTRY.size)
        return ns, kind, num, off

    def _compare(self, k: int, nid: NodeId, key: tuple) -> tuple[int, NodeRecord | None]:
        ns, kind, num, off = self.index_entry(k)
        self.bytes_touched += INDEX_ENTRY.size
        if (ns, kind) != key[:2]:
            return (-1 if (ns, kind) < key[:2] else 1), None
        if kind == 0:
            if num != nid.identifier:
                return (-1 if num < nid.identifier else 1), None
            return 0, None
        rec = parse_record(self.data, off, self.values_offset)
        self.bytes_touched += rec.size
        other = rec.node_id.sort_key()[2]
        if other == key[2]:
            return 0, rec
        return (-1 if other < key[2] else 1), None

    def lookup(self, nid: NodeId) -> NodeRecord | None:
        """Binary search; ``last_probes`` counts index entries examined."""
        key = nid.sort_key()
        lo, hi = 0, self.node_count - 1
        probes = 0
        found = None
        while lo <= hi:
            mid = (lo + hi) // 2
            probes += 1
            cmp, rec = self._compare(mid, nid, key)
            if cmp == 0:
                found = rec
                if found is None:
                    off = self.index_entry(mid)[3]
                    found = parse_record(self.data, off, self.values_offset)
                    self.bytes_touched += found.size
                break
            if cmp < 0:
                lo = mid + 1
            else:
                hi = mid - 1
        self.last_probes = probes
        return found

    def probe_bound(self) -> int:
        return math.ceil(math.log2(self.node_count)) + 1 if self.node_count > 1 else 1

    def records(self):
        for k in range(self.node_count):
            yield parse_record(self.data, self.index_entry(k)[3], self.values_offset)

    # --- attributes -------------------------------------------------------

    def slot_value(self, rec: NodeRecord) -> Variant:
        slot = bytes(self.data[rec.slot_offset:rec.slot_offset + rec.slot_length])
        self.bytes_touched += rec.slot_length
        value, _ = decode_value(slot, "Variant")
        return value

    def read_attribute(self, nid: NodeId, attr: int) -> tuple[Variant | None, StatusCode]:
        rec = self.lookup(nid)
        if rec is None:
            return None, StatusCode.BadNodeIdUnknown
        if attr not in READABLE_ATTRIBUTES or (attr in VARIABLE_ONLY and rec.data_type is None):
            return None, StatusCode.BadAttributeIdInvalid
        if attr == Attr.NodeId:
            return Variant(VariantType.NodeId, rec.node_id), StatusCode.Good
        if attr == Attr.BrowseName:
            return Variant(VariantType.QualifiedName, rec.browse_name), StatusCode.Good
        if attr == Attr.DisplayName:
            return Variant(VariantType.LocalizedText, LocalizedText(rec.display_name)), StatusCode.Good
        if attr == Attr.DataType:
            return Variant(VariantType.NodeId, rec.data_type), StatusCode.Good
        if attr == Attr.AccessLevel:
            return Variant(VariantType.Byte, rec.access), StatusCode.Good
        if not rec.access & ACCESS_READ:
            return None, StatusCode.BadNotReadable
        return self.slot_value(rec), StatusCode.Good

    def write_value(self, nid: NodeId, value: Variant, attr: int = Attr.Value) -> StatusCode:
        rec = self.lookup(nid)
        if rec is None:
            return StatusCode.BadNodeIdUnknown
        if attr != Attr.Value:
            if 1 <= attr <= Attr.MAX_DEFINED:
                return StatusCode.BadNotWritable
            return StatusCode.BadAttributeIdInvalid
        if rec.data_type is None:
            return StatusCode.BadAttributeIdInvalid
        if not rec.access & ACCESS_WRITE:
            return StatusCode.BadNotWritable
        if rec.value_type == 0 or value is None or int(value.type) != rec.value_type:
            return StatusCode.BadTypeMismatch
        try:
            raw = encode_value(value)
        except CodecError:
            return StatusCode.BadTypeMismatch
        if len(raw) > rec.slot_length:
            return StatusCode.BadOutOfRange
        start = rec.slot_offset
        self.data[start:start + rec.slot_length] = raw.ljust(rec.slot_length, b"\x00")
        self.bytes_touched += rec.slot_length
        return StatusCode.Good

    def value_slots(self) -> list[tuple[int, int]]:
        return [(rec.slot_offset, rec.slot_length) for rec in self.records() if rec.data_type is not None]


def _read_ns_table(data, count: int, end: int) -> list[str]:
    r = Reader(memoryview(data)[:end], pos=HEADER.size)
    return [_read_u16_string(r) for _ in range(count)]


def verify(img: bytes | bytearray) -> list[str]:
    """Structural checks; an empty list means the image is safe to load."""
    problems: list[str] = []
    if len(img) < HEADER.size:
        return ["image shorter than header"]
    magic, version, ns_count, node_count, index_offset, total_size, values_offset = HEADER.unpack_from(img, 0)
    if magic != MAGIC:
        return ["bad magic"]
    if version != VERSION:
        return [f"unsupported version {version}"]
    if total_size != len(img):
        problems.append(f"totalSize {total_size} != image length {len(img)}")
    size = min(total_size, len(img))
    try:
        _read_ns_table(img, ns_count, index_offset)
    except (CodecError, UnicodeDecodeError):
        problems.append("namespace table out of bounds")
    index_end = index_offset + node_count * INDEX_ENTRY.size
    if index_offset < HEADER.size or index_end > size:
        problems.append("index out of bounds")
        node_count = max(0, (size - index_offset) // INDEX_ENTRY.size) if index_offset >= HEADER.size else 0
        index_end = index_offset + node_count * INDEX_ENTRY.size
    if not index_end <= values_offset <= total_size:
        problems.append("values section out of bounds")
    records_end = min(values_offset, size)
    prev_key = None
    slots: list[tuple[int, int, int]] = []
    for k in range(node_count):
        ns, kind, reserved, num, off = INDEX_ENTRY.unpack_from(img, index_offset + k * INDEX_ENTRY.size)
        if reserved or kind > 3:
            problems.append(f"index entry malformed @{k}")
            continue
        if not index_end <= off < records_end:
            problems.append(f"record offset out of bounds @{k}")
            continue
        try:
            rec = parse_record(img, off, records_end)
        except (CodecError, UnicodeDecodeError, struct.error):
            problems.append(f"record out of bounds @{k}")
            continue
        nid = rec.node_id
        if (nid.namespace, nid.kind_rank) != (ns, kind) or (kind == 0 and nid.identifier != num):
            problems.append(f"index key mismatch @{k}")
        key = nid.sort_key()
        if prev_key is not None and key <= prev_key:
            problems.append(f"index not sorted @{k}")
        prev_key = key
        if rec.data_type is not None:
            start, end = rec.slot_offset, rec.slot_offset + rec.slot_length
            if start < values_offset or end > size or rec.slot_length == 0:
                problems.append(f"value slot out of bounds @{k}")
            else:
                slots.append((start, end, k))
    slots.sort()
    for (s0, e0, _), (s1, _, k1) in zip(slots, slots[1:]):
        if s1 < e0:
            problems.append(f"value slots overlap @{k1}")
    return problems
