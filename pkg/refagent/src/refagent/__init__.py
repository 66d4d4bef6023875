"""Reference implementation of the dicect external-agent protocol.

Serves one of three modes over stdin/stdout: ``echo`` (identity),
``smooth`` (normalized Gaussian blur), and ``interp-complete``
(per-detector linear interpolation of missing sinogram rows). Standard
library only, so it doubles as an executable description of the wire
format.
"""

__version__ = "0.1.0"

from .protocol import Frame, encode, decode_stream  # noqa: F401
from .agent import serve, main  # noqa: F401
