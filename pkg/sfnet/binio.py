"""Little-endian binary helpers shared by the SFNR and SFNM containers."""
from __future__ import annotations

import math
import struct

import numpy as np

from .errors import BadMagicError, ExtentOverflowError, FormatError, TruncatedPayloadError

DTYPE_CODES: dict[int, np.dtype] = {0: np.dtype("<f4"), 1: np.dtype("<f8")}

# 1 GiB of scalars is far past anything a desk-scale raster or model holds.
MAX_ELEMENTS = 1 << 28


def dtype_code(dtype: np.dtype) -> int:
    for code, dt in DTYPE_CODES.items():
        if np.dtype(dtype) == dt.newbyteorder("="):
            return code
    raise FormatError(f"no container code for scalar type {np.dtype(dtype)}")


class ByteReader:
    def __init__(self, payload: bytes, what: str):
        self._buf = memoryview(payload)
        self._pos = 0
        self._what = what

    @property
    def remaining(self) -> int:
        return len(self._buf) - self._pos

    def take(self, n: int) -> bytes:
        if n > self.remaining:
            raise TruncatedPayloadError(
                f"{self._what}: needed {n} bytes at offset {self._pos}, only {self.remaining} left"
            )
        chunk = self._buf[self._pos : self._pos + n].tobytes()
        self._pos += n
        return chunk

    def magic(self, expected: bytes) -> None:
        got = self.take(len(expected)) if self.remaining >= len(expected) else self.take(self.remaining)
        if got != expected:
            raise BadMagicError(f"{self._what}: bad magic {got!r}, expected {expected!r}")

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def array(self, shape: tuple[int, ...], dtype: np.dtype) -> np.ndarray:
        count = math.prod(shape)
        if count > MAX_ELEMENTS:
            raise ExtentOverflowError(f"{self._what}: extents {list(shape)} exceed {MAX_ELEMENTS} elements")
        raw = self.take(count * dtype.itemsize)
        return np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))

    def text(self) -> str:
        n = self.u16()
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{self._what}: invalid utf-8 name") from exc

    def finish(self) -> None:
        if self.remaining:
            raise FormatError(f"{self._what}: {self.remaining} trailing bytes")


class ByteWriter:
    def __init__(self):
        self._parts: list[bytes] = []

    def raw(self, data: bytes) -> None:
        self._parts.append(data)

    def u8(self, v: int) -> None:
        self._parts.append(struct.pack("<B", v))

    def u16(self, v: int) -> None:
        self._parts.append(struct.pack("<H", v))

    def u32(self, v: int) -> None:
        self._parts.append(struct.pack("<I", v))

    def array(self, arr: np.ndarray, dtype: np.dtype) -> None:
        self._parts.append(np.ascontiguousarray(arr, dtype=dtype).tobytes())

    def text(self, s: str) -> None:
        data = s.encode("utf-8")
        if len(data) > 0xFFFF:
            raise FormatError(f"name too long ({len(data)} bytes)")
        self.u16(len(data))
        self._parts.append(data)

    def getvalue(self) -> bytes:
        return b"".join(self._parts)
