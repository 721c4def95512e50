"""Little helpers for the length-prefixed binary containers (SLMD, GMSG, SPKT, EVST)."""

from __future__ import annotations

import struct

import numpy as np
import torch

from .errors import FormatError


class Reader:
    """Cursor over a bytes buffer that raises FormatError with offsets."""

    def __init__(self, buf: bytes, what: str = "buffer"):
        self.buf = memoryview(buf)
        self.pos = 0
        self.what = what

    def take(self, n: int) -> memoryview:
        if n < 0 or self.pos + n > len(self.buf):
            raise FormatError(
                f"truncated {self.what}: expected {n} more bytes, "
                f"{len(self.buf) - self.pos} available",
                offset=self.pos,
            )
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size))

    def u32(self) -> int:
        return self.unpack("<I")[0]

    def u64(self) -> int:
        return self.unpack("<Q")[0]

    def magic(self, expected: bytes) -> None:
        start = self.pos
        got = bytes(self.take(len(expected)))
        if got != expected:
            raise FormatError(f"bad magic {got!r}, expected {expected!r}", offset=start)

    def tensor_f64(self) -> torch.Tensor:
        ndim = self.u32()
        if ndim > 16:
            raise FormatError(f"implausible tensor rank {ndim}", offset=self.pos - 4)
        dims = self.unpack(f"<{ndim}I") if ndim else ()
        count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        raw = self.take(8 * count)
        arr = np.frombuffer(raw, dtype="<f8").reshape(dims).astype(np.float64)
        return torch.from_numpy(arr)

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise FormatError(
                f"{len(self.buf) - self.pos} trailing bytes in {self.what}", offset=self.pos
            )


def pack_tensor_f64(t: torch.Tensor) -> bytes:
    arr = np.ascontiguousarray(t.detach().cpu().numpy(), dtype="<f8")
    header = struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape)
    return header + arr.tobytes()
