"""Replace run-dependent fields so captured responses can be compared."""

from __future__ import annotations

import dataclasses

from .messages import ServiceMessage
from .types import DataValue

MASKED_TIMESTAMP = 0
MASKED_HANDLE = 0
MASKED_NONCE = b"<nonce>"

_NONCE_FIELDS = ("ServerNonce",)


def _mask_datavalue(dv: DataValue) -> DataValue:
    changes = {}
    if dv.source_timestamp is not None:
        changes["source_timestamp"] = MASKED_TIMESTAMP
    if dv.server_timestamp is not None:
        changes["server_timestamp"] = MASKED_TIMESTAMP
    return dataclasses.replace(dv, **changes) if changes else dv


def mask_volatile_fields(m: ServiceMessage) -> ServiceMessage:
    """Return a copy with timestamps, echoed request handles and server nonces canonicalized."""
    out = m.copy()
    fields = out.fields
    for header_name in ("ResponseHeader", "RequestHeader"):
        header = fields.get(header_name)
        if isinstance(header, dict):
            header["Timestamp"] = MASKED_TIMESTAMP
            header["RequestHandle"] = MASKED_HANDLE
    for name in _NONCE_FIELDS:
        if fields.get(name) is not None:
            fields[name] = MASKED_NONCE
    token = fields.get("SecurityToken")
    if isinstance(token, dict):
        token["CreatedAt"] = MASKED_TIMESTAMP
    results = fields.get("Results")
    if isinstance(results, list):
        fields["Results"] = [_mask_datavalue(r) if isinstance(r, DataValue) else r for r in results]
    return out
