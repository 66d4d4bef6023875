"""Frame encoding/decoding for the dicect agent protocol, version 1.

Layout (little-endian): magic b"DICE", version u8 = 1, msg_type u8,
rows u32, cols u32, then the body. Numeric frames carry rows*cols
float32; a sinogram request prefixes ceil(rows/8) mask bytes (bit r of
byte r//8, LSB first, set = row observed); an error frame carries
rows = 0 and cols UTF-8 message bytes.
"""
from __future__ import annotations

import struct
from array import array
from dataclasses import dataclass, field

MAGIC = b"DICE"
VERSION = 1
HELLO, IMAGE_REQUEST, SINOGRAM_REQUEST, RESPONSE, ERROR = range(5)

_HEADER = struct.Struct("<4sBBII")
HEADER_SIZE = _HEADER.size
_TYPES = (HELLO, IMAGE_REQUEST, SINOGRAM_REQUEST, RESPONSE, ERROR)


class FrameError(ValueError):
    pass


@dataclass
class Frame:
    msg_type: int
    rows: int = 0
    cols: int = 0
    payload: array = field(default_factory=lambda: array("f"))
    mask: list[bool] = field(default_factory=list)
    message: str = ""


def body_sizes(msg_type: int, rows: int, cols: int) -> tuple[int, int]:
    """(mask bytes, payload bytes) for a header."""
    if msg_type == HELLO:
        return 0, 0
    if msg_type == ERROR:
        return 0, cols
    mask = (rows + 7) // 8 if msg_type == SINOGRAM_REQUEST else 0
    return mask, rows * cols * 4


def encode(frame: Frame) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, frame.msg_type, frame.rows, frame.cols)
    if frame.msg_type == HELLO:
        return header
    if frame.msg_type == ERROR:
        data = frame.message.encode("utf-8")
        return _HEADER.pack(MAGIC, VERSION, ERROR, 0, len(data)) + data
    if len(frame.payload) != frame.rows * frame.cols:
        raise FrameError("payload length does not match header")
    body = frame.payload.tobytes() if frame.payload.itemsize == 4 else b""
    if frame.msg_type == SINOGRAM_REQUEST:
        mask_bytes = bytearray((frame.rows + 7) // 8)
        for r, flag in enumerate(frame.mask):
            if flag:
                mask_bytes[r // 8] |= 1 << (r % 8)
        return header + bytes(mask_bytes) + body
    return header + body


def parse_header(data: bytes):
    magic, version, msg_type, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FrameError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FrameError(f"unsupported version {version}")
    if msg_type not in _TYPES:
        raise FrameError(f"unknown message type {msg_type}")
    return msg_type, rows, cols


def decode_body(msg_type: int, rows: int, cols: int, body: bytes) -> Frame:
    mask_len, payload_len = body_sizes(msg_type, rows, cols)
    if len(body) != mask_len + payload_len:
        raise FrameError("body length does not match header")
    if msg_type == HELLO:
        return Frame(HELLO)
    if msg_type == ERROR:
        return Frame(ERROR, 0, cols, message=body.decode("utf-8", errors="replace"))
    mask: list[bool] = []
    if msg_type == SINOGRAM_REQUEST:
        raw = body[:mask_len]
        mask = [bool(raw[r // 8] >> (r % 8) & 1) for r in range(rows)]
        body = body[mask_len:]
    payload = array("f")
    payload.frombytes(body)
    if struct.pack("<f", 1.0) != struct.pack("=f", 1.0):  # big-endian host
        payload.byteswap()
    return Frame(msg_type, rows, cols, payload, mask)


def read_exact(stream, n: int) -> bytes | None:
    """Read exactly n bytes; None on clean EOF at a frame boundary."""
    chunks = bytearray()
    while len(chunks) < n:
        piece = stream.read(n - len(chunks))
        if not piece:
            return None if not chunks else bytes(chunks)
        chunks.extend(piece)
    return bytes(chunks)


def decode_stream(stream):
    """Yield frames from a binary stream until EOF; a malformed header
    raises FrameError with the stream positioned after that header."""
    while True:
        header = read_exact(stream, HEADER_SIZE)
        if header is None:
            return
        if len(header) < HEADER_SIZE:
            raise FrameError("truncated header at EOF")
        msg_type, rows, cols = parse_header(header)
        mask_len, payload_len = body_sizes(msg_type, rows, cols)
        body = b""
        if mask_len + payload_len:
            body = read_exact(stream, mask_len + payload_len)
            if body is None or len(body) < mask_len + payload_len:
                raise FrameError("truncated body at EOF")
        yield decode_body(msg_type, rows, cols, body)
