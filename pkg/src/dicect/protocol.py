"""Framed wire protocol for external agent processes over stdin/stdout,
plus the in-process client.

Frame layout (version 1, little-endian, frozen):

    magic    4 bytes  b"DICE"
    version  u8       1
    msg_type u8       0 hello, 1 image-request, 2 sinogram-request,
                      3 response, 4 error
    rows     u32
    cols     u32
    body     depends on msg_type:
      hello (0)             empty, rows = cols = 0
      image-request (1)     rows*cols float32 payload
      sinogram-request (2)  ceil(rows/8) mask bytes, then rows*cols
                            float32 payload; mask bit r (byte r//8, bit
                            r%8, LSB first) set = row r observed
      response (3)          rows*cols float32 payload
      error (4)             rows = 0, cols = byte length of a UTF-8
                            message, then that many bytes

Payloads are row-major float32; wider internal precision is converted at
this boundary. One request is in flight per handle at a time.
"""
from __future__ import annotations

import select
import shlex
import struct
import subprocess
import threading
import time
from dataclasses import dataclass

import numpy as np

from .errors import AgentRemoteError, TransportError

__all__ = [
    "MAGIC",
    "PROTOCOL_VERSION",
    "MSG_HELLO",
    "MSG_IMAGE_REQUEST",
    "MSG_SINOGRAM_REQUEST",
    "MSG_RESPONSE",
    "MSG_ERROR",
    "AgentFrame",
    "encode_frame",
    "decode_frame",
    "AgentHandle",
    "agent_call",
    "image_request",
    "complete_request",
]

MAGIC = b"DICE"
PROTOCOL_VERSION = 1
MSG_HELLO = 0
MSG_IMAGE_REQUEST = 1
MSG_SINOGRAM_REQUEST = 2
MSG_RESPONSE = 3
MSG_ERROR = 4

_HEADER = struct.Struct("<4sBBII")
HEADER_SIZE = _HEADER.size


@dataclass
class AgentFrame:
    """One protocol frame. ``payload`` is a float32 (rows, cols) array for
    numeric frames, ``mask`` a boolean row mask for sinogram requests, and
    ``message`` the text of an error frame."""

    msg_type: int
    rows: int = 0
    cols: int = 0
    payload: np.ndarray | None = None
    mask: np.ndarray | None = None
    message: str = ""

    @classmethod
    def hello(cls) -> "AgentFrame":
        return cls(MSG_HELLO)

    @classmethod
    def image_request(cls, values) -> "AgentFrame":
        arr = np.ascontiguousarray(values, dtype=np.float32)
        return cls(MSG_IMAGE_REQUEST, arr.shape[0], arr.shape[1], arr)

    @classmethod
    def sinogram_request(cls, values, observed) -> "AgentFrame":
        arr = np.ascontiguousarray(values, dtype=np.float32)
        mask = np.ascontiguousarray(observed, dtype=bool)
        if mask.shape != (arr.shape[0],):
            raise ValueError("mask length must equal payload rows")
        return cls(MSG_SINOGRAM_REQUEST, arr.shape[0], arr.shape[1], arr, mask)

    @classmethod
    def response(cls, values) -> "AgentFrame":
        arr = np.ascontiguousarray(values, dtype=np.float32)
        return cls(MSG_RESPONSE, arr.shape[0], arr.shape[1], arr)

    @classmethod
    def error(cls, message: str) -> "AgentFrame":
        data = message.encode("utf-8")
        return cls(MSG_ERROR, 0, len(data), message=message)


def _pack_mask(observed: np.ndarray) -> bytes:
    return bytes(np.packbits(observed, bitorder="little"))


def _unpack_mask(data: bytes, rows: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    return bits[:rows].astype(bool)


def encode_frame(frame: AgentFrame) -> bytes:
    header = _HEADER.pack(
        MAGIC, PROTOCOL_VERSION, frame.msg_type, frame.rows, frame.cols
    )
    if frame.msg_type == MSG_HELLO:
        return header
    if frame.msg_type == MSG_ERROR:
        data = frame.message.encode("utf-8")
        if len(data) != frame.cols or frame.rows != 0:
            raise ValueError("error frame header does not match message length")
        return header + data
    payload = np.ascontiguousarray(frame.payload, dtype="<f4")
    if payload.shape != (frame.rows, frame.cols):
        raise ValueError("payload shape does not match header")
    body = payload.tobytes()
    if frame.msg_type == MSG_SINOGRAM_REQUEST:
        if frame.mask is None or frame.mask.shape != (frame.rows,):
            raise ValueError("sinogram request needs a row mask")
        return header + _pack_mask(frame.mask) + body
    return header + body


def _body_plan(msg_type: int, rows: int, cols: int) -> tuple[int, int]:
    """(mask_bytes, payload_bytes) implied by a header."""
    if msg_type == MSG_HELLO:
        return 0, 0
    if msg_type == MSG_ERROR:
        return 0, cols
    mask = (rows + 7) // 8 if msg_type == MSG_SINOGRAM_REQUEST else 0
    return mask, rows * cols * 4


def decode_frame(data: bytes) -> AgentFrame:
    """Decode one complete frame from bytes; raises TransportError on any
    malformation."""
    if len(data) < HEADER_SIZE:
        raise TransportError("frame shorter than header")
    magic, version, msg_type, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise TransportError(f"bad magic {magic!r}")
    if version != PROTOCOL_VERSION:
        raise TransportError(f"unsupported protocol version {version}")
    if msg_type not in (MSG_HELLO, MSG_IMAGE_REQUEST, MSG_SINOGRAM_REQUEST, MSG_RESPONSE, MSG_ERROR):
        raise TransportError(f"unknown message type {msg_type}")
    mask_len, payload_len = _body_plan(msg_type, rows, cols)
    if len(data) != HEADER_SIZE + mask_len + payload_len:
        raise TransportError(
            f"frame length {len(data)} does not match header "
            f"(expected {HEADER_SIZE + mask_len + payload_len})"
        )
    if msg_type == MSG_HELLO:
        if rows or cols:
            raise TransportError("hello frame must have zero shape")
        return AgentFrame(MSG_HELLO)
    if msg_type == MSG_ERROR:
        if rows != 0:
            raise TransportError("error frame must have rows == 0")
        msg = data[HEADER_SIZE:].decode("utf-8", errors="replace")
        return AgentFrame(MSG_ERROR, 0, cols, message=msg)
    body = data[HEADER_SIZE:]
    mask = None
    if msg_type == MSG_SINOGRAM_REQUEST:
        mask = _unpack_mask(body[:mask_len], rows)
        body = body[mask_len:]
    payload = np.frombuffer(body, dtype="<f4").reshape(rows, cols).copy()
    return AgentFrame(msg_type, rows, cols, payload, mask)


def _read_exact(stream, n: int, deadline: float | None) -> bytes:
    """Read exactly n bytes, honoring the deadline via select()."""
    chunks = bytearray()
    fd = stream.fileno()
    while len(chunks) < n:
        if deadline is not None:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TimeoutError
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                raise TimeoutError
        chunk = stream.read(n - len(chunks))
        if not chunk:
            raise TransportError("agent closed the stream mid-frame")
        chunks.extend(chunk)
    return bytes(chunks)


def read_frame(stream, timeout: float | None = None) -> AgentFrame:
    """Read one frame from a binary stream (blocking, optional timeout)."""
    deadline = time.monotonic() + timeout if timeout is not None else None
    header = _read_exact(stream, HEADER_SIZE, deadline)
    magic, version, msg_type, rows, cols = _HEADER.unpack_from(header)
    mask_len, payload_len = _body_plan(msg_type, rows, cols)
    # cap body size before trusting the header (1 GiB)
    if mask_len + payload_len > 1 << 30:
        raise TransportError("frame body implausibly large")
    body = _read_exact(stream, mask_len + payload_len, deadline) if mask_len + payload_len else b""
    return decode_frame(header + body)


class AgentHandle:
    """A live external agent subprocess plus its stdio channel.

    The constructor launches the command and performs the hello exchange.
    Calls are serialized per handle; a timeout or transport failure kills
    the process and marks the handle dead.
    """

    def __init__(self, command, timeout: float = 30.0):
        if isinstance(command, str):
            command = shlex.split(command)
        self.command = list(command)
        self.timeout = timeout
        self._lock = threading.Lock()
        self._proc = None
        self.alive = False
        try:
            # bufsize=0: reads must come straight off the pipe so select()
            # sees exactly what is unconsumed
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,
                bufsize=0,
            )
        except OSError as exc:
            raise TransportError(f"could not launch agent {self.command}: {exc}") from exc
        self.alive = True
        reply = self.call(AgentFrame.hello())
        if reply.msg_type != MSG_HELLO:
            self._kill()
            raise TransportError(
                f"agent did not answer hello (got message type {reply.msg_type})"
            )

    def call(self, frame: AgentFrame) -> AgentFrame:
        """Send one frame and read one reply; exactly one request is in
        flight per handle."""
        with self._lock:
            if not self.alive:
                raise TransportError("agent handle is dead")
            try:
                self._proc.stdin.write(encode_frame(frame))
                self._proc.stdin.flush()
                reply = read_frame(self._proc.stdout, timeout=self.timeout)
            except TimeoutError:
                self._kill()
                raise TransportError(
                    f"agent timed out after {self.timeout}s; handle marked dead"
                ) from None
            except (TransportError, OSError, BrokenPipeError) as exc:
                self._kill()
                if isinstance(exc, TransportError):
                    raise
                raise TransportError(f"agent I/O failed: {exc}") from exc
            if reply.msg_type == MSG_ERROR:
                raise AgentRemoteError(reply.message)
            return reply

    def _kill(self):
        self.alive = False
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        self.alive = False

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def agent_call(handle: AgentHandle, frame: AgentFrame) -> AgentFrame:
    """Send one frame on a live handle and return the single reply."""
    return handle.call(frame)


def image_request(handle: AgentHandle, values: np.ndarray) -> np.ndarray:
    """Round-trip an image; the response must keep the shape."""
    frame = AgentFrame.image_request(values)
    reply = agent_call(handle, frame)
    if reply.msg_type != MSG_RESPONSE:
        raise TransportError(f"expected response frame, got type {reply.msg_type}")
    if (reply.rows, reply.cols) != (frame.rows, frame.cols):
        raise TransportError(
            f"image agent changed shape: {(frame.rows, frame.cols)} -> "
            f"{(reply.rows, reply.cols)}"
        )
    return reply.payload.astype(np.float64)


def complete_request(handle: AgentHandle, values: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Ship a limited sinogram plus row mask; the response must cover the
    full set of rows."""
    frame = AgentFrame.sinogram_request(values, observed)
    reply = agent_call(handle, frame)
    if reply.msg_type != MSG_RESPONSE:
        raise TransportError(f"expected response frame, got type {reply.msg_type}")
    if (reply.rows, reply.cols) != (frame.rows, frame.cols):
        raise TransportError(
            f"completion agent returned shape {(reply.rows, reply.cols)}, "
            f"expected {(frame.rows, frame.cols)}"
        )
    return reply.payload.astype(np.float64)
