"""The serving loop and the three built-in behaviors."""
from __future__ import annotations

import argparse
import math
import sys
from array import array

from . import protocol as P


def _rows(frame: P.Frame) -> list[list[float]]:
    return [
        list(frame.payload[r * frame.cols : (r + 1) * frame.cols])
        for r in range(frame.rows)
    ]


def _flat(rows: list[list[float]]) -> array:
    out = array("f")
    for row in rows:
        out.extend(row)
    return out


def gaussian_kernel(sigma: float) -> list[float]:
    radius = max(1, int(math.ceil(3.0 * sigma)))
    taps = [math.exp(-0.5 * (i / sigma) ** 2) for i in range(-radius, radius + 1)]
    total = sum(taps)
    return [t / total for t in taps]


def _reflect(i: int, n: int) -> int:
    # half-sample symmetric: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
    while i < 0 or i >= n:
        if i < 0:
            i = -i - 1
        if i >= n:
            i = 2 * n - i - 1
    return i


def smooth(rows: list[list[float]], sigma: float) -> list[list[float]]:
    """Separable normalized Gaussian blur with reflective boundaries."""
    kernel = gaussian_kernel(sigma)
    radius = (len(kernel) - 1) // 2
    h = len(rows)
    w = len(rows[0]) if h else 0
    tmp = [[0.0] * w for _ in range(h)]
    for i in range(h):
        row = rows[i]
        for j in range(w):
            acc = 0.0
            for t, k in enumerate(kernel):
                acc += k * row[_reflect(j + t - radius, w)]
            tmp[i][j] = acc
    out = [[0.0] * w for _ in range(h)]
    for j in range(w):
        for i in range(h):
            acc = 0.0
            for t, k in enumerate(kernel):
                acc += k * tmp[_reflect(i + t - radius, h)][j]
            out[i][j] = acc
    return out


def interp_complete(rows: list[list[float]], observed: list[bool]) -> list[list[float]]:
    """Fill unobserved rows by per-detector linear interpolation between
    the nearest observed rows.

    Rows are assumed to cover [0, pi) uniformly, so the wrap-around view
    at row r +- n_rows is the detector-reversed row r; those virtual rows
    bracket gaps that touch either end. Observed rows pass through
    unchanged.
    """
    n = len(rows)
    if n == 0 or not any(observed):
        return rows
    idx_obs = [i for i, f in enumerate(observed) if f]
    # virtual flipped copies one half-turn away on both sides
    points = (
        [(i - n, rows[i][::-1]) for i in idx_obs]
        + [(float(i), rows[i]) for i in idx_obs]
        + [(i + n, rows[i][::-1]) for i in idx_obs]
    )
    positions = [p for p, _ in points]
    out = [row[:] for row in rows]
    for r in range(n):
        if observed[r]:
            continue
        # nearest bracketing points
        hi = 0
        while positions[hi] < r:
            hi += 1
        lo = hi - 1
        span = positions[hi] - positions[lo]
        t = (r - positions[lo]) / span if span else 0.0
        lo_row, hi_row = points[lo][1], points[hi][1]
        out[r] = [(1.0 - t) * a + t * b for a, b in zip(lo_row, hi_row)]
    return out


def _respond(frame: P.Frame, mode: str, sigma: float) -> P.Frame:
    if frame.msg_type == P.HELLO:
        return P.Frame(P.HELLO)
    if frame.msg_type not in (P.IMAGE_REQUEST, P.SINOGRAM_REQUEST):
        return P.Frame(P.ERROR, message=f"unexpected message type {frame.msg_type}")
    if mode == "echo":
        return P.Frame(P.RESPONSE, frame.rows, frame.cols, frame.payload)
    if mode == "smooth":
        rows = smooth(_rows(frame), sigma)
        return P.Frame(P.RESPONSE, frame.rows, frame.cols, _flat(rows))
    if mode == "interp-complete":
        if frame.msg_type != P.SINOGRAM_REQUEST:
            return P.Frame(P.ERROR, message="interp-complete needs a sinogram request")
        rows = interp_complete(_rows(frame), frame.mask)
        return P.Frame(P.RESPONSE, frame.rows, frame.cols, _flat(rows))
    return P.Frame(P.ERROR, message=f"unknown mode {mode}")


def serve(stdin, stdout, mode: str, sigma: float = 2.0) -> None:
    """Answer frames until EOF; malformed input gets an error frame and
    the loop continues."""
    while True:
        header = P.read_exact(stdin, P.HEADER_SIZE)
        if header is None:
            return
        if len(header) < P.HEADER_SIZE:
            return
        try:
            msg_type, rows, cols = P.parse_header(header)
            mask_len, payload_len = P.body_sizes(msg_type, rows, cols)
            body = b""
            if mask_len + payload_len:
                body = P.read_exact(stdin, mask_len + payload_len)
                if body is None or len(body) < mask_len + payload_len:
                    return
            frame = P.decode_body(msg_type, rows, cols, body)
        except P.FrameError as exc:
            stdout.write(P.encode(P.Frame(P.ERROR, message=str(exc))))
            stdout.flush()
            continue
        reply = _respond(frame, mode, sigma)
        stdout.write(P.encode(reply))
        stdout.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="refagent", description=__doc__)
    parser.add_argument(
        "--mode",
        required=True,
        choices=["echo", "smooth", "interp-complete"],
    )
    parser.add_argument("--sigma-px", type=float, default=2.0)
    args = parser.parse_args(argv)
    serve(sys.stdin.buffer, sys.stdout.buffer, args.mode, args.sigma_px)
    return 0


if __name__ == "__main__":
    sys.exit(main())
