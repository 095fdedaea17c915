"""Elias delta code for positive integers.

Codewords are strings of ASCII '0'/'1', most significant bit first in every
field. A codeword for k is: the Elias gamma code of L = bit_length(k),
followed by the L - 1 bits of k below its leading one.
"""
from __future__ import annotations

import numpy as np


class DecodeError(ValueError):
    pass


def elias_delta_encode(k: int) -> str:
    k = int(k)
    if k < 1:
        raise ValueError(f"Elias delta codes positive integers only, got {k}")
    n = k.bit_length()
    len_bits = bin(n)[2:]
    return "0" * (len(len_bits) - 1) + len_bits + bin(k)[3:]


def elias_delta_decode(bits: str, start: int = 0) -> tuple[int, int]:
    """Decode one codeword beginning at ``bits[start]``.

    Returns ``(k, consumed)``; trailing bits after the codeword are ignored.
    """
    i = start
    zeros = 0
    while i < len(bits) and bits[i] == "0":
        zeros += 1
        i += 1
    if i >= len(bits):
        raise DecodeError("truncated codeword: no terminating length prefix")
    end = i + zeros + 1
    if end > len(bits):
        raise DecodeError("truncated codeword: length field cut short")
    if set(bits[i:end]) - {"0", "1"}:
        raise DecodeError("codeword contains characters other than 0/1")
    n = int(bits[i:end], 2)
    tail_end = end + n - 1
    if tail_end > len(bits):
        raise DecodeError("truncated codeword: value field cut short")
    tail = bits[end:tail_end]
    if set(tail) - {"0", "1"}:
        raise DecodeError("codeword contains characters other than 0/1")
    return int("1" + tail, 2), tail_end - start


def elias_delta_length(k) -> np.ndarray | int:
    """Codeword length floor(log2 k) + 2 floor(log2(floor(log2 k) + 1)) + 1.

    Accepts scalars or integer arrays; exact integer arithmetic either way.
    """
    if np.isscalar(k):
        k = int(k)
        if k < 1:
            raise ValueError("length defined for k >= 1")
        n = k.bit_length() - 1
        return n + 2 * ((n + 1).bit_length() - 1) + 1
    k = np.asarray(k, dtype=np.int64)
    if np.any(k < 1):
        raise ValueError("length defined for k >= 1")
    n = _floor_log2(k)
    return n + 2 * _floor_log2(n + 1) + 1


def _floor_log2(a: np.ndarray) -> np.ndarray:
    # binary search on shifts; float routes would round near 2**63
    a = a.astype(np.int64).copy()
    n = np.zeros_like(a)
    for s in (32, 16, 8, 4, 2, 1):
        hi = a >= (1 << s)
        n += s * hi
        a = np.where(hi, a >> s, a)
    return n


def expected_length_bound(elogk: float) -> float:
    """Upper bound E log K + 2 log(E log K + 1) + 1 on the mean codeword length."""
    if elogk < 0:
        raise ValueError("E[log K] cannot be negative")
    return elogk + 2.0 * np.log2(elogk + 1.0) + 1.0
