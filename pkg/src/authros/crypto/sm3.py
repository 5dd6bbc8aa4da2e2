"""SM3 cryptographic hash (GB/T 32905-2016).

The compression function is compiled with numba; everything else is plain
Python.  ``sm3_hash`` is the public entry point.
"""
from __future__ import annotations

import numba
import numpy as np

DIGEST_SIZE = 32
BLOCK_SIZE = 64

_IV = np.array(
    [0x7380166F, 0x4914B2B9, 0x172442D7, 0xDA8A0600,
     0xA96F30BC, 0x163138AA, 0xE38DEE4D, 0xB0FB0E4E],
    dtype=np.uint32,
)


@numba.njit(cache=True, inline="always")
def _rotl(x, n):
    n = n % 32
    return ((x << np.uint32(n)) | (x >> np.uint32((32 - n) % 32))) & np.uint32(0xFFFFFFFF)


@numba.njit(cache=True)
def _compress(v, w, buf, off):
    """Fold one 64-byte block of ``buf`` starting at ``off`` into state ``v``.

    ``w`` is a 68-word scratch array supplied by the caller.
    """
    for j in range(16):
        k = off + 4 * j
        w[j] = ((np.uint32(buf[k]) << np.uint32(24)) | (np.uint32(buf[k + 1]) << np.uint32(16))
                | (np.uint32(buf[k + 2]) << np.uint32(8)) | np.uint32(buf[k + 3]))
    for j in range(16, 68):
        x = w[j - 16] ^ w[j - 9] ^ _rotl(w[j - 3], 15)
        w[j] = (x ^ _rotl(x, 15) ^ _rotl(x, 23)) ^ _rotl(w[j - 13], 7) ^ w[j - 6]

    a, b, c, d = v[0], v[1], v[2], v[3]
    e, f, g, h = v[4], v[5], v[6], v[7]
    for j in range(64):
        t = np.uint32(0x79CC4519) if j < 16 else np.uint32(0x7A879D8A)
        a12 = _rotl(a, 12)
        ss1 = _rotl((a12 + e + _rotl(t, j)) & np.uint32(0xFFFFFFFF), 7)
        ss2 = ss1 ^ a12
        if j < 16:
            ff = a ^ b ^ c
            gg = e ^ f ^ g
        else:
            ff = (a & b) | (a & c) | (b & c)
            gg = (e & f) | (~e & g)
        tt1 = (ff + d + ss2 + (w[j] ^ w[j + 4])) & np.uint32(0xFFFFFFFF)
        tt2 = (gg + h + ss1 + w[j]) & np.uint32(0xFFFFFFFF)
        d = c
        c = _rotl(b, 9)
        b = a
        a = tt1
        h = g
        g = _rotl(f, 19)
        f = e
        e = tt2 ^ _rotl(tt2, 9) ^ _rotl(tt2, 17)
    v[0] ^= a
    v[1] ^= b
    v[2] ^= c
    v[3] ^= d
    v[4] ^= e
    v[5] ^= f
    v[6] ^= g
    v[7] ^= h


@numba.njit(cache=True)
def _digest_words(msg, iv):
    # full blocks are read in place; only the tail is copied for padding
    n = msg.shape[0]
    v = iv.copy()
    w = np.empty(68, dtype=np.uint32)
    full = n - n % 64
    for off in range(0, full, 64):
        _compress(v, w, msg, off)
    rem = n - full
    tail_len = 64 if rem < 56 else 128
    tail = np.zeros(tail_len, dtype=np.uint8)
    tail[:rem] = msg[full:]
    tail[rem] = 0x80
    bits = np.uint64(n) * np.uint64(8)
    for i in range(8):
        tail[tail_len - 1 - i] = np.uint8((bits >> np.uint64(8 * i)) & np.uint64(0xFF))
    for off in range(0, tail_len, 64):
        _compress(v, w, tail, off)
    return v


@numba.njit(cache=True)
def _words_to_bytes(v):
    out = np.empty(32, dtype=np.uint8)
    for i in range(8):
        out[4 * i] = np.uint8(v[i] >> np.uint32(24))
        out[4 * i + 1] = np.uint8((v[i] >> np.uint32(16)) & np.uint32(0xFF))
        out[4 * i + 2] = np.uint8((v[i] >> np.uint32(8)) & np.uint32(0xFF))
        out[4 * i + 3] = np.uint8(v[i] & np.uint32(0xFF))
    return out


@numba.njit(cache=True)
def _digest_array(msg, iv):
    return _words_to_bytes(_digest_words(msg, iv))


def sm3_hash(message: bytes) -> bytes:
    """Return the 32-byte SM3 digest of ``message``."""
    arr = np.frombuffer(message, dtype=np.uint8)
    return _digest_array(arr, _IV).tobytes()


def sm3_hex(message: bytes) -> str:
    return sm3_hash(message).hex()


# --- proof-of-work search -------------------------------------------------
#
# The nonce occupies the last 8 bytes of the sealed header, so the search loop
# lives next to the compression function and never leaves compiled code.


@numba.njit(cache=True)
def _below(digest, target):
    for i in range(32):
        if digest[i] < target[i]:
            return True
        if digest[i] > target[i]:
            return False
    return False


@numba.njit(cache=True)
def _search(prefix, start, count, target, iv):
    n = prefix.shape[0]
    msg = np.empty(n + 8, dtype=np.uint8)
    msg[:n] = prefix
    for k in range(count):
        nonce = np.uint64(start) + np.uint64(k)
        for i in range(8):
            msg[n + i] = np.uint8((nonce >> np.uint64(8 * (7 - i))) & np.uint64(0xFF))
        d = _digest_array(msg, iv)
        if _below(d, target):
            return k
    return -1


def search_nonce(prefix: bytes, start: int, count: int, target: int) -> int | None:
    """Scan ``count`` nonces from ``start``; return the first whose digest of
    ``prefix || nonce_be64`` is below ``target``, else None.

    ``target`` must be < 2**256 (callers handle the always-true case).
    """
    tgt = np.frombuffer(target.to_bytes(32, "big"), dtype=np.uint8)
    arr = np.frombuffer(bytes(prefix), dtype=np.uint8)
    k = _search(arr, start, count, tgt, _IV)
    if k < 0:
        return None
    return (start + k) & 0xFFFFFFFFFFFFFFFF
