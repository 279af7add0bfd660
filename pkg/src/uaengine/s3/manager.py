"""Session layer: stage allocation, session services and VM dispatch."""

from __future__ import annotations

import hashlib
import logging
import os
import threading
from dataclasses import dataclass
from typing import Callable

from ..codec import (
    CodecError,
    Reader,
    LocalizedText,
    NodeId,
    ServiceMessage,
    StatusCode,
    decode_message,
    encode_message,
    make_struct,
    open_extension_object,
    peek_message_type,
    response_header,
    service_fault,
)
from ..codec.binary import read_nodeid
from ..codec.messages import ENCODING_IDS, NAMES_BY_ID, read_typed
from ..nsimage import NamespaceImage, NamespacePort
from ..streamvm import NoEntryPoint, Outcome, TrapKind, VmProgram, make_streams, run_service
from ..transport.chunks import SECURITY_POLICY_NONE
from .config import EngineConfig
from .stage import BufferPool, S3Stage, StageState

log = logging.getLogger(__name__)

TRANSPORT_PROFILE = "http://opcfoundation.org/UA-Profile/Transport/uatcp-uasc-uabinary"
ANONYMOUS_POLICY_ID = "anonymous"
SESSION_SERVICES = ("CreateSessionRequest", "ActivateSessionRequest", "CloseSessionRequest")
VM_SERVICES = ("ReadRequest", "WriteRequest")
TICKS_PER_MS = 10_000


@dataclass
class Work:
    """What one request cost, for the cycle simulator."""

    service: str
    stage: int | None
    request_size: int
    response_size: int
    status: int = 0
    # bytes the communication processor parsed from / composed into the buffer
    cp_read: int = 0
    cp_write: int = 0
    vm_events: list | None = None
    vm_cycles: int = 0


class ServiceError(Exception):
    def __init__(self, status: StatusCode, detail: str = ""):
        super().__init__(f"{status.name}: {detail}")
        self.status = status


class S3Manager:
    """The set of S3 stages behind one transport; implements the message handler."""

    def __init__(
        self,
        config: EngineConfig,
        image: NamespaceImage,
        program: VmProgram,
        clock: Callable[[], int],
        seed: bytes | None = None,
        pool: BufferPool | None = None,
        record_vm: bool = False,
    ):
        self.config = config
        self.image = image
        self.program = program
        self.clock = clock
        self.seed = os.urandom(16) if seed is None else seed
        self.pool = pool
        self.record_vm = record_vm
        self.stages = [S3Stage(i, config.buffer_bytes_per_stage) for i in range(config.session_slots)]
        self.alloc_lock = threading.Lock()
        self.port = NamespacePort(image, clock, threading.Lock())
        self._counter = 0

    # --- helpers --------------------------------------------------------------

    def _derive(self, label: bytes) -> bytes:
        self._counter += 1
        return hashlib.sha256(self.seed + label + self._counter.to_bytes(8, "little")).digest()

    def now_ms(self) -> float:
        return self.clock() / TICKS_PER_MS

    def endpoint(self) -> dict:
        url = self.config.endpoint_url
        server = make_struct(
            "ApplicationDescription",
            ApplicationUri="urn:uaengine:server",
            ProductUri="urn:uaengine",
            ApplicationName=LocalizedText("uaengine"),
            ApplicationType=0,
            DiscoveryUrls=[url],
        )
        policy = make_struct("UserTokenPolicy", PolicyId=ANONYMOUS_POLICY_ID, TokenType=0)
        return make_struct(
            "EndpointDescription",
            EndpointUrl=url,
            Server=server,
            SecurityMode=1,
            SecurityPolicyUri=SECURITY_POLICY_NONE,
            UserIdentityTokens=[policy],
            TransportProfileUri=TRANSPORT_PROFILE,
            SecurityLevel=0,
        )

    def _header(self, req: ServiceMessage, status: int = 0) -> dict:
        return response_header(req["RequestHeader"]["RequestHandle"], status, self.clock())

    def stage_for_token(self, token: NodeId | None) -> S3Stage | None:
        for stage in self.stages:
            if stage.state is not StageState.FREE and stage.token is not None and stage.token == token:
                return stage
        return None

    def expire_sessions(self) -> None:
        now = self.now_ms()
        with self.alloc_lock:
            for stage in self.stages:
                if stage.expired(now):
                    log.info("event=session_timeout stage=%d", stage.stage_id)
                    stage.free()

    # --- stage allocation -------------------------------------------------------

    def allocate_stage(self, channel_id: int) -> S3Stage:
        """Bind the lowest-index free stage to ``channel_id``."""
        with self.alloc_lock:
            for stage in self.stages:
                if stage.state is StageState.FREE:
                    stage.advance(StageState.CHANNEL_BOUND)
                    stage.channel_id = channel_id
                    return stage
        raise ServiceError(StatusCode.BadTooManySessions, f"all {len(self.stages)} stages busy")

    def channel_closed(self, channel_id: int) -> None:
        with self.alloc_lock:
            for stage in self.stages:
                if stage.state is not StageState.FREE and stage.channel_id == channel_id:
                    log.info("event=stage_freed stage=%d reason=channel_closed", stage.stage_id)
                    stage.free()

    def active_sessions(self) -> int:
        return sum(1 for s in self.stages if s.state is not StageState.FREE)

    # --- message entry point -------------------------------------------------------

    def handle_message(self, channel_id: int, request: bytes) -> tuple[bytes, Work]:
        self.expire_sessions()
        type_id, header = peek_message_type(request)
        name = NAMES_BY_ID.get(type_id, f"i={type_id}")
        handle = header["RequestHandle"] if header else 0
        work = Work(name, None, len(request), 0)
        try:
            if name == "GetEndpointsRequest":
                req = self._decode(request)
                resp = ServiceMessage.new("GetEndpointsResponse", ResponseHeader=self._header(req), Endpoints=[self.endpoint()])
            elif name in SESSION_SERVICES:
                req = self._decode(request)
                resp = self.handle_session_service(channel_id, req, work)
            elif name in VM_SERVICES:
                self._decode(request)  # validate before the VM sees it
                stage = self._session_stage(channel_id, header)
                work.stage = stage.stage_id
                out = self.dispatch(stage, request, type_id, work)
                work.response_size = len(out)
                return out, work
            else:
                raise ServiceError(StatusCode.BadServiceUnsupported, name)
        except ServiceError as exc:
            resp = service_fault(exc.status, handle, self.clock())
            work.status = exc.status
        out = encode_message(resp)
        work.cp_read = len(request)
        work.cp_write = len(out)
        work.response_size = len(out)
        return out, work

    def _decode(self, request: bytes) -> ServiceMessage:
        try:
            return decode_message(request)
        except CodecError as exc:
            raise ServiceError(StatusCode.BadDecodingError, str(exc)) from None

    def _session_stage(self, channel_id: int, header: dict | None) -> S3Stage:
        token = header["AuthenticationToken"] if header else None
        stage = self.stage_for_token(token)
        if stage is None or stage.channel_id != channel_id:
            raise ServiceError(StatusCode.BadSessionIdInvalid, "unknown authentication token")
        if stage.state is not StageState.SESSION_ACTIVE:
            raise ServiceError(StatusCode.BadSessionNotActivated, f"stage {stage.stage_id}")
        stage.last_activity_ms = self.now_ms()
        return stage

    # --- session services ----------------------------------------------------------

    def handle_session_service(self, channel_id: int, req: ServiceMessage, work: Work) -> ServiceMessage:
        if req.name == "CreateSessionRequest":
            stage = self.allocate_stage(channel_id)
            work.stage = stage.stage_id
            requested = req["RequestedSessionTimeout"]
            timeout = min(max(requested, self.config.min_session_timeout_ms), self.config.max_session_timeout_ms)
            stage.session_id = NodeId(1, 100_000 + stage.stage_id * 10_000 + self._counter % 10_000)
            stage.token = NodeId(1, self._derive(b"token"))
            stage.timeout_ms = timeout
            stage.last_activity_ms = self.now_ms()
            stage.advance(StageState.SESSION_CREATED)
            log.info("event=session_created stage=%d channel=%d timeout_ms=%g", stage.stage_id, channel_id, timeout)
            return ServiceMessage.new(
                "CreateSessionResponse",
                ResponseHeader=self._header(req),
                SessionId=stage.session_id,
                AuthenticationToken=stage.token,
                RevisedSessionTimeout=float(timeout),
                ServerNonce=self._derive(b"nonce"),
                ServerEndpoints=[self.endpoint()],
                ServerSoftwareCertificates=[],
                MaxRequestMessageSize=self.config.buffer_bytes_per_stage,
            )

        token = req["RequestHeader"]["AuthenticationToken"]
        stage = self.stage_for_token(token)
        if stage is None or stage.channel_id != channel_id:
            raise ServiceError(StatusCode.BadSessionIdInvalid, "unknown authentication token")
        work.stage = stage.stage_id
        stage.last_activity_ms = self.now_ms()

        if req.name == "ActivateSessionRequest":
            kind, _ = open_extension_object(req["UserIdentityToken"])
            eo = req["UserIdentityToken"]
            anonymous = kind == "AnonymousIdentityToken" or eo is None or eo.type_id == NodeId()
            if not anonymous:
                raise ServiceError(StatusCode.BadIdentityTokenRejected, f"identity token {kind or eo.type_id}")
            if stage.state is StageState.SESSION_CREATED:
                stage.advance(StageState.SESSION_ACTIVE)
            return ServiceMessage.new(
                "ActivateSessionResponse",
                ResponseHeader=self._header(req),
                ServerNonce=self._derive(b"nonce"),
                Results=[],
                DiagnosticInfos=[],
            )

        # CloseSession
        with self.alloc_lock:
            stage.free()
        log.info("event=session_closed stage=%d", work.stage)
        return ServiceMessage.new("CloseSessionResponse", ResponseHeader=self._header(req))

    # --- VM dispatch -------------------------------------------------------------------

    def dispatch(self, stage: S3Stage, request: bytes, type_id: int, work: Work) -> bytes:
        """Run the service program for ``type_id`` over the request in ``stage``'s buffer."""
        r = Reader(request)
        read_nodeid(r)
        body = request[r.pos:]
        header = read_typed(r, "RequestHeader")
        # the communication processor only looks at the type id and session token
        work.cp_read = r.pos
        capacity = stage.capacity - len(request)
        if self.pool is not None:
            capacity = min(capacity, self.pool.available())
        streams = make_streams(body, max(capacity, 0), self.port)
        self.port.reset()
        self.image.bytes_touched = 0
        try:
            result = run_service(self.program, type_id, streams, self.config.vm_budget, self.record_vm)
        except NoEntryPoint:
            raise ServiceError(StatusCode.BadServiceUnsupported, NAMES_BY_ID.get(type_id, str(type_id))) from None
        work.vm_events = result.events
        work.vm_cycles = result.cycles
        if result.outcome is Outcome.HALTED:
            out = bytes(streams[1].buf)
            stage.occupancy = len(request) + len(out)
            if self.pool is not None:
                if not self.pool.reserve(len(out)):
                    raise RuntimeError("response buffer over budget")
                self.pool.release(len(out))
            return out
        trap = result.trap
        if trap is not None and trap.kind is TrapKind.STREAM_OVERRUN and trap.stream == 1:
            status = StatusCode.BadResponseTooLarge
        else:
            status = StatusCode.BadInternalError
            detail = trap if trap is not None else f"budget of {self.config.vm_budget} cycles exhausted"
            log.warning("event=vm_fault service=%s stage=%d detail=%s", work.service, stage.stage_id, detail)
        work.status = status
        handle = header["RequestHandle"]
        out = encode_message(service_fault(status, handle, self.clock()))
        work.cp_write = len(out)
        return out


# exported for the engine and tests
READ_REQUEST = ENCODING_IDS["ReadRequest"]
WRITE_REQUEST = ENCODING_IDS["WriteRequest"]
