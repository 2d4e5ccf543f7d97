"""Lossless bytestream backends: byte-wise RLE and a greedy LZ77 dictionary coder.

LZ77 wire format: a flag byte precedes each group of up to eight tokens,
least significant bit first. A set bit is a back-reference of three bytes
(offset as uint16 little-endian, then length - min_match); a clear bit is one
literal byte.

The LZ77 match finder keeps two hash chains, one keyed on 3-byte prefixes and
one on 6-byte prefixes. Once a match of six bytes or more is known, only
candidates sharing those six bytes can beat it, so the search continues on the
longer-prefix chain. Both chains hold every position in the window, so the
result is the longest match (nearest on ties), same as an exhaustive scan.
"""
import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import Union

import numpy as np
from numba import njit

from flicr.utils.error_handler import MalformedStreamError, ParameterError

logger = logging.getLogger(__name__)

BytesLike = Union[bytes, bytearray, memoryview]

RLE_MAX_RUN = 255
LZ77_MAX_WINDOW = (1 << 16) - 1
LZ77_REF_BYTES = 3

HASH_BITS = 16
LONG_PREFIX = 6

# lz77 decode kernel status codes
_OK = 0
_TRUNCATED_GROUP = 1
_EMPTY_GROUP = 2
_TRUNCATED_REF = 3
_BEFORE_START = 4
_BEYOND_WINDOW = 5
_ZERO_OFFSET = 6
_TOO_LONG = 7


class CodecId(IntEnum):
    RLE = 0
    LZ77 = 1

    @classmethod
    def parse(cls, value: Union[str, int, 'CodecId']) -> 'CodecId':
        if isinstance(value, CodecId):
            return value
        if isinstance(value, int):
            try:
                return cls(value)
            except ValueError:
                raise ParameterError(f"unknown codec id {value}", 'codec')
        try:
            return cls[str(value).strip().upper()]
        except KeyError:
            raise ParameterError(f"unknown codec '{value}' (expected lz77 or rle)", 'codec')


@dataclass(frozen=True)
class Lz77Params:
    """max_chain = 0 searches every candidate in the window; > 0 caps the
    candidates examined per position, trading ratio for speed."""

    window_bytes: int = 32768
    min_match: int = 3
    max_match: int = 258
    max_chain: int = 0

    def __post_init__(self):
        if not 1 <= self.window_bytes <= LZ77_MAX_WINDOW:
            raise ParameterError(f"window_bytes must be in [1, {LZ77_MAX_WINDOW}], got {self.window_bytes}",
                                 'window_bytes')
        if self.min_match < 3:
            raise ParameterError(f"min_match must be >= 3, got {self.min_match}", 'min_match')
        if self.max_match < self.min_match:
            raise ParameterError("max_match must be >= min_match", 'max_match')
        if self.max_match - self.min_match > 255:
            raise ParameterError("max_match - min_match must fit in one byte", 'max_match')
        if self.max_chain < 0:
            raise ParameterError(f"max_chain must be >= 0 (0 = unbounded), got {self.max_chain}", 'max_chain')


def _as_array(data: BytesLike) -> np.ndarray:
    return np.frombuffer(bytes(data), dtype=np.uint8)


def rle_encode(data: BytesLike) -> bytes:
    """(count, value) byte pairs; runs longer than 255 are split"""
    arr = _as_array(data)
    if arr.size == 0:
        return b''

    starts = np.concatenate(([0], np.flatnonzero(arr[1:] != arr[:-1]) + 1))
    lengths = np.diff(np.append(starts, arr.size))
    values = arr[starts]

    pairs = (lengths + RLE_MAX_RUN - 1) // RLE_MAX_RUN
    counts = np.full(int(pairs.sum()), RLE_MAX_RUN, dtype=np.uint8)
    counts[np.cumsum(pairs) - 1] = lengths - RLE_MAX_RUN * (pairs - 1)

    out = np.empty(2 * counts.size, dtype=np.uint8)
    out[0::2] = counts
    out[1::2] = np.repeat(values, pairs)
    return out.tobytes()


def rle_decode(data: BytesLike) -> bytes:
    arr = _as_array(data)
    if arr.size % 2:
        raise MalformedStreamError("RLE stream has odd length", offset=arr.size - 1)
    counts = arr[0::2]
    zero = np.flatnonzero(counts == 0)
    if zero.size:
        raise MalformedStreamError("RLE run with zero count", offset=int(zero[0]) * 2)
    return np.repeat(arr[1::2], counts).tobytes()


@njit(cache=True, nogil=True)
def _hash3(data, p):
    key = (np.int64(data[p]) << 16) | (np.int64(data[p + 1]) << 8) | np.int64(data[p + 2])
    return ((key * 2654435761) & 0xFFFFFFFF) >> (32 - HASH_BITS)


@njit(cache=True, nogil=True)
def _hash6(data, p):
    a = (np.int64(data[p]) << 16) | (np.int64(data[p + 1]) << 8) | np.int64(data[p + 2])
    b = (np.int64(data[p + 3]) << 16) | (np.int64(data[p + 4]) << 8) | np.int64(data[p + 5])
    return (((a * 2654435761) ^ (b * 2246822519)) & 0xFFFFFFFF) >> (32 - HASH_BITS)


@njit(cache=True, nogil=True)
def _lz77_encode_kernel(data, window, min_match, max_match, max_chain):
    n = data.size
    out = np.empty(n + (n + 7) // 8, dtype=np.uint8)
    head3 = np.full(1 << HASH_BITS, -1, dtype=np.int32)
    head6 = np.full(1 << HASH_BITS, -1, dtype=np.int32)
    prev3 = np.full(max(n, 1), -1, dtype=np.int32)
    prev6 = np.full(max(n, 1), -1, dtype=np.int32)

    o = 0
    flag_pos = 0
    bit = 8
    i = 0
    while i < n:
        best_len = 0
        best_off = 0
        if i + min_match <= n:
            limit = min(max_match, n - i)
            long_chain = False
            cand = head3[_hash3(data, i)]
            visited = 0
            while cand >= 0:
                off = i - cand
                if off > window or (max_chain > 0 and visited >= max_chain):
                    break
                visited += 1
                if data[cand + best_len] == data[i + best_len]:
                    length = 0
                    while length < limit and data[cand + length] == data[i + length]:
                        length += 1
                    if length > best_len:
                        best_len = length
                        best_off = off
                        if length == limit:
                            break
                        if not long_chain and length >= LONG_PREFIX:
                            long_chain = True
                            cand = head6[_hash6(data, i)]
                            continue
                cand = prev6[cand] if long_chain else prev3[cand]

        if bit == 8:
            flag_pos = o
            out[o] = 0
            o += 1
            bit = 0

        if best_len >= min_match:
            out[flag_pos] |= np.uint8(1 << bit)
            out[o] = best_off & 0xFF
            out[o + 1] = best_off >> 8
            out[o + 2] = best_len - min_match
            o += LZ77_REF_BYTES
            step = best_len
        else:
            out[o] = data[i]
            o += 1
            step = 1

        for p in range(i, i + step):
            if p + 3 <= n:
                h = _hash3(data, p)
                prev3[p] = head3[h]
                head3[h] = p
            if p + LONG_PREFIX <= n:
                h = _hash6(data, p)
                prev6[p] = head6[h]
                head6[h] = p
        i += step
        bit += 1

    return out[:o]


@njit(cache=True, nogil=True)
def _lz77_scan(data, window, min_match, max_match):
    """Validate the token stream: (status, byte offset, decoded length)"""
    n = data.size
    pos = 0
    produced = 0
    while pos < n:
        flags = data[pos]
        pos += 1
        for bit in range(8):
            if pos >= n:
                if flags >> bit:
                    return _TRUNCATED_GROUP, pos, produced
                if bit == 0:
                    return _EMPTY_GROUP, pos - 1, produced
                break
            if flags & (1 << bit):
                if pos + LZ77_REF_BYTES > n:
                    return _TRUNCATED_REF, pos, produced
                offset = np.int64(data[pos]) | (np.int64(data[pos + 1]) << 8)
                length = np.int64(data[pos + 2]) + min_match
                if offset == 0:
                    return _ZERO_OFFSET, pos, produced
                if offset > produced:
                    return _BEFORE_START, pos, produced
                if offset > window:
                    return _BEYOND_WINDOW, pos, produced
                if length > max_match:
                    return _TOO_LONG, pos, produced
                produced += length
                pos += LZ77_REF_BYTES
            else:
                produced += 1
                pos += 1
    return _OK, pos, produced


@njit(cache=True, nogil=True)
def _lz77_decode_kernel(data, min_match, total):
    n = data.size
    out = np.empty(total, dtype=np.uint8)
    pos = 0
    o = 0
    while pos < n:
        flags = data[pos]
        pos += 1
        for bit in range(8):
            if pos >= n:
                break
            if flags & (1 << bit):
                offset = np.int64(data[pos]) | (np.int64(data[pos + 1]) << 8)
                length = np.int64(data[pos + 2]) + min_match
                start = o - offset
                for k in range(length):
                    out[o + k] = out[start + k]
                o += length
                pos += LZ77_REF_BYTES
            else:
                out[o] = data[pos]
                o += 1
                pos += 1
    return out


def lz77_encode(data: BytesLike, params: Lz77Params = Lz77Params()) -> bytes:
    """Greedy longest-match LZ77 within the window"""
    arr = _as_array(data)
    return _lz77_encode_kernel(arr, params.window_bytes, params.min_match,
                               params.max_match, params.max_chain).tobytes()


def lz77_decode(data: BytesLike, params: Lz77Params = Lz77Params()) -> bytes:
    arr = _as_array(data)
    status, offset, total = _lz77_scan(arr, params.window_bytes, params.min_match, params.max_match)
    if status != _OK:
        messages = {
            _TRUNCATED_GROUP: "truncated token group",
            _EMPTY_GROUP: "flag byte without tokens",
            _TRUNCATED_REF: "truncated back-reference",
            _BEFORE_START: f"back-reference before stream start ({total} bytes decoded)",
            _BEYOND_WINDOW: f"back-reference offset exceeds window of {params.window_bytes} bytes",
            _ZERO_OFFSET: "back-reference with zero offset",
            _TOO_LONG: f"match length exceeds max_match {params.max_match}",
        }
        raise MalformedStreamError(messages[status], offset=int(offset))
    return _lz77_decode_kernel(arr, params.min_match, total).tobytes()


def encode_bytes(data: BytesLike, codec: CodecId, params: Lz77Params = Lz77Params()) -> bytes:
    if codec == CodecId.LZ77:
        return lz77_encode(data, params)
    if codec == CodecId.RLE:
        return rle_encode(data)
    raise ParameterError(f"unknown codec {codec}", 'codec')


def decode_bytes(data: BytesLike, codec: CodecId, params: Lz77Params = Lz77Params()) -> bytes:
    if codec == CodecId.LZ77:
        return lz77_decode(data, params)
    if codec == CodecId.RLE:
        return rle_decode(data)
    raise ParameterError(f"unknown codec {codec}", 'codec')
