"""Tiny standalone agent processes used by the protocol tests. Each
function body is dumped to a temp file and run with the current
interpreter, so the tests do not depend on any installed agent."""

ECHO_AGENT = r"""
import struct, sys

HEADER = struct.Struct("<4sBBII")

def read_exact(n):
    data = b""
    while len(data) < n:
        chunk = sys.stdin.buffer.read(n - len(data))
        if not chunk:
            return None
        data += chunk
    return data

while True:
    head = read_exact(HEADER.size)
    if head is None:
        break
    magic, version, msg_type, rows, cols = HEADER.unpack(head)
    if msg_type == 2:
        body = read_exact((rows + 7) // 8 + rows * cols * 4)
        payload = body[(rows + 7) // 8 :]
    elif msg_type in (1, 3):
        payload = read_exact(rows * cols * 4)
    elif msg_type == 4:
        payload = read_exact(cols)
    else:
        payload = b""
    if msg_type == 0:
        sys.stdout.buffer.write(HEADER.pack(b"DICE", 1, 0, 0, 0))
    else:
        sys.stdout.buffer.write(HEADER.pack(b"DICE", 1, 3, rows, cols) + payload)
    sys.stdout.buffer.flush()
"""

SLEEPY_AGENT = r"""
import struct, sys, time

HEADER = struct.Struct("<4sBBII")

def read_exact(n):
    data = b""
    while len(data) < n:
        chunk = sys.stdin.buffer.read(n - len(data))
        if not chunk:
            return None
        data += chunk
    return data

first = True
while True:
    head = read_exact(HEADER.size)
    if head is None:
        break
    magic, version, msg_type, rows, cols = HEADER.unpack(head)
    if msg_type in (1, 3):
        read_exact(rows * cols * 4)
    if msg_type == 0:
        sys.stdout.buffer.write(HEADER.pack(b"DICE", 1, 0, 0, 0))
        sys.stdout.buffer.flush()
    else:
        time.sleep(60)
"""

ERROR_AGENT = r"""
import struct, sys

HEADER = struct.Struct("<4sBBII")

def read_exact(n):
    data = b""
    while len(data) < n:
        chunk = sys.stdin.buffer.read(n - len(data))
        if not chunk:
            return None
        data += chunk
    return data

while True:
    head = read_exact(HEADER.size)
    if head is None:
        break
    magic, version, msg_type, rows, cols = HEADER.unpack(head)
    if msg_type in (1, 3):
        read_exact(rows * cols * 4)
    elif msg_type == 2:
        read_exact((rows + 7) // 8 + rows * cols * 4)
    if msg_type == 0:
        sys.stdout.buffer.write(HEADER.pack(b"DICE", 1, 0, 0, 0))
    else:
        msg = b"deliberate failure"
        sys.stdout.buffer.write(HEADER.pack(b"DICE", 1, 4, 0, len(msg)) + msg)
    sys.stdout.buffer.flush()
"""

NAN_AGENT = r"""
import struct, sys

HEADER = struct.Struct("<4sBBII")

def read_exact(n):
    data = b""
    while len(data) < n:
        chunk = sys.stdin.buffer.read(n - len(data))
        if not chunk:
            return None
        data += chunk
    return data

while True:
    head = read_exact(HEADER.size)
    if head is None:
        break
    magic, version, msg_type, rows, cols = HEADER.unpack(head)
    if msg_type in (1, 3):
        read_exact(rows * cols * 4)
    elif msg_type == 2:
        read_exact((rows + 7) // 8 + rows * cols * 4)
    if msg_type == 0:
        sys.stdout.buffer.write(HEADER.pack(b"DICE", 1, 0, 0, 0))
    else:
        payload = struct.pack("<f", float("nan")) * (rows * cols)
        sys.stdout.buffer.write(HEADER.pack(b"DICE", 1, 3, rows, cols) + payload)
    sys.stdout.buffer.flush()
"""

BAD_VERSION_AGENT = r"""
import struct, sys

HEADER = struct.Struct("<4sBBII")
head = sys.stdin.buffer.read(HEADER.size)
sys.stdout.buffer.write(HEADER.pack(b"DICE", 9, 0, 0, 0))
sys.stdout.buffer.flush()
import time
time.sleep(5)
"""
