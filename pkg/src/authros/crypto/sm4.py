"""SM4 block cipher (GB/T 32907-2016) with CBC mode and byte-value padding."""
from __future__ import annotations

import numba
import numpy as np

BLOCK_SIZE = 16
KEY_SIZE = 16


class CorruptCiphertext(ValueError):
    """Raised when CBC ciphertext has a bad length or malformed padding."""


_SBOX = np.array([
    0xd6, 0x90, 0xe9, 0xfe, 0xcc, 0xe1, 0x3d, 0xb7, 0x16, 0xb6, 0x14, 0xc2, 0x28, 0xfb, 0x2c, 0x05,
    0x2b, 0x67, 0x9a, 0x76, 0x2a, 0xbe, 0x04, 0xc3, 0xaa, 0x44, 0x13, 0x26, 0x49, 0x86, 0x06, 0x99,
    0x9c, 0x42, 0x50, 0xf4, 0x91, 0xef, 0x98, 0x7a, 0x33, 0x54, 0x0b, 0x43, 0xed, 0xcf, 0xac, 0x62,
    0xe4, 0xb3, 0x1c, 0xa9, 0xc9, 0x08, 0xe8, 0x95, 0x80, 0xdf, 0x94, 0xfa, 0x75, 0x8f, 0x3f, 0xa6,
    0x47, 0x07, 0xa7, 0xfc, 0xf3, 0x73, 0x17, 0xba, 0x83, 0x59, 0x3c, 0x19, 0xe6, 0x85, 0x4f, 0xa8,
    0x68, 0x6b, 0x81, 0xb2, 0x71, 0x64, 0xda, 0x8b, 0xf8, 0xeb, 0x0f, 0x4b, 0x70, 0x56, 0x9d, 0x35,
    0x1e, 0x24, 0x0e, 0x5e, 0x63, 0x58, 0xd1, 0xa2, 0x25, 0x22, 0x7c, 0x3b, 0x01, 0x21, 0x78, 0x87,
    0xd4, 0x00, 0x46, 0x57, 0x9f, 0xd3, 0x27, 0x52, 0x4c, 0x36, 0x02, 0xe7, 0xa0, 0xc4, 0xc8, 0x9e,
    0xea, 0xbf, 0x8a, 0xd2, 0x40, 0xc7, 0x38, 0xb5, 0xa3, 0xf7, 0xf2, 0xce, 0xf9, 0x61, 0x15, 0xa1,
    0xe0, 0xae, 0x5d, 0xa4, 0x9b, 0x34, 0x1a, 0x55, 0xad, 0x93, 0x32, 0x30, 0xf5, 0x8c, 0xb1, 0xe3,
    0x1d, 0xf6, 0xe2, 0x2e, 0x82, 0x66, 0xca, 0x60, 0xc0, 0x29, 0x23, 0xab, 0x0d, 0x53, 0x4e, 0x6f,
    0xd5, 0xdb, 0x37, 0x45, 0xde, 0xfd, 0x8e, 0x2f, 0x03, 0xff, 0x6a, 0x72, 0x6d, 0x6c, 0x5b, 0x51,
    0x8d, 0x1b, 0xaf, 0x92, 0xbb, 0xdd, 0xbc, 0x7f, 0x11, 0xd9, 0x5c, 0x41, 0x1f, 0x10, 0x5a, 0xd8,
    0x0a, 0xc1, 0x31, 0x88, 0xa5, 0xcd, 0x7b, 0xbd, 0x2d, 0x74, 0xd0, 0x12, 0xb8, 0xe5, 0xb4, 0xb0,
    0x89, 0x69, 0x97, 0x4a, 0x0c, 0x96, 0x77, 0x7e, 0x65, 0xb9, 0xf1, 0x09, 0xc5, 0x6e, 0xc6, 0x84,
    0x18, 0xf0, 0x7d, 0xec, 0x3a, 0xdc, 0x4d, 0x20, 0x79, 0xee, 0x5f, 0x3e, 0xd7, 0xcb, 0x39, 0x48,
], dtype=np.uint8)

_FK = np.array([0xA3B1BAC6, 0x56AA3350, 0x677D9197, 0xB27022DC], dtype=np.uint32)
# CK[i] byte j = (4i + j) * 7 mod 256
_CK = np.array(
    [int.from_bytes(bytes(((4 * i + j) * 7) % 256 for j in range(4)), "big") for i in range(32)],
    dtype=np.uint32,
)


@numba.njit(cache=True, inline="always")
def _rotl(x, n):
    return ((x << np.uint32(n)) | (x >> np.uint32(32 - n))) & np.uint32(0xFFFFFFFF)


@numba.njit(cache=True, inline="always")
def _tau(x, sbox):
    return ((np.uint32(sbox[(x >> np.uint32(24)) & np.uint32(0xFF)]) << np.uint32(24))
            | (np.uint32(sbox[(x >> np.uint32(16)) & np.uint32(0xFF)]) << np.uint32(16))
            | (np.uint32(sbox[(x >> np.uint32(8)) & np.uint32(0xFF)]) << np.uint32(8))
            | np.uint32(sbox[x & np.uint32(0xFF)]))


@numba.njit(cache=True)
def _expand_key(key, sbox, fk, ck):
    k = np.empty(36, dtype=np.uint32)
    for i in range(4):
        k[i] = ((np.uint32(key[4 * i]) << np.uint32(24)) | (np.uint32(key[4 * i + 1]) << np.uint32(16))
                | (np.uint32(key[4 * i + 2]) << np.uint32(8)) | np.uint32(key[4 * i + 3])) ^ fk[i]
    rk = np.empty(32, dtype=np.uint32)
    for i in range(32):
        b = _tau(k[i + 1] ^ k[i + 2] ^ k[i + 3] ^ ck[i], sbox)
        k[i + 4] = k[i] ^ b ^ _rotl(b, 13) ^ _rotl(b, 23)
        rk[i] = k[i + 4]
    return rk


@numba.njit(cache=True)
def _crypt_block(src, soff, dst, doff, rk, sbox):
    x = np.empty(36, dtype=np.uint32)
    for i in range(4):
        j = soff + 4 * i
        x[i] = ((np.uint32(src[j]) << np.uint32(24)) | (np.uint32(src[j + 1]) << np.uint32(16))
                | (np.uint32(src[j + 2]) << np.uint32(8)) | np.uint32(src[j + 3]))
    for i in range(32):
        b = _tau(x[i + 1] ^ x[i + 2] ^ x[i + 3] ^ rk[i], sbox)
        x[i + 4] = x[i] ^ b ^ _rotl(b, 2) ^ _rotl(b, 10) ^ _rotl(b, 18) ^ _rotl(b, 24)
    for i in range(4):
        w = x[35 - i]
        j = doff + 4 * i
        dst[j] = np.uint8(w >> np.uint32(24))
        dst[j + 1] = np.uint8((w >> np.uint32(16)) & np.uint32(0xFF))
        dst[j + 2] = np.uint8((w >> np.uint32(8)) & np.uint32(0xFF))
        dst[j + 3] = np.uint8(w & np.uint32(0xFF))


@numba.njit(cache=True)
def _ecb(data, rk, sbox):
    out = np.empty_like(data)
    for off in range(0, data.shape[0], 16):
        _crypt_block(data, off, out, off, rk, sbox)
    return out


@numba.njit(cache=True)
def _cbc_encrypt(data, iv, rk, sbox):
    out = np.empty_like(data)
    block = iv.copy()
    for off in range(0, data.shape[0], 16):
        for i in range(16):
            block[i] ^= data[off + i]
        _crypt_block(block, 0, out, off, rk, sbox)
        block[:] = out[off:off + 16]
    return out


@numba.njit(cache=True)
def _cbc_decrypt(data, iv, rk, sbox):
    out = np.empty_like(data)
    prev = iv.copy()
    for off in range(0, data.shape[0], 16):
        _crypt_block(data, off, out, off, rk, sbox)
        for i in range(16):
            out[off + i] ^= prev[i]
        prev[:] = data[off:off + 16]
    return out


def _u8(b: bytes) -> np.ndarray:
    return np.frombuffer(bytes(b), dtype=np.uint8)


def _round_keys(key: bytes, decrypt: bool = False) -> np.ndarray:
    if len(key) != KEY_SIZE:
        raise ValueError(f"SM4 key must be {KEY_SIZE} bytes, got {len(key)}")
    rk = _expand_key(_u8(key), _SBOX, _FK, _CK)
    return rk[::-1].copy() if decrypt else rk


def _check_iv(iv: bytes) -> None:
    if len(iv) != BLOCK_SIZE:
        raise ValueError(f"IV must be {BLOCK_SIZE} bytes, got {len(iv)}")


def encrypt_block(key: bytes, block: bytes) -> bytes:
    """Raw single-block SM4 encryption (no mode, no padding)."""
    if len(block) % BLOCK_SIZE:
        raise ValueError("ECB input must be a multiple of 16 bytes")
    return _ecb(_u8(block), _round_keys(key), _SBOX).tobytes()


def decrypt_block(key: bytes, block: bytes) -> bytes:
    if len(block) % BLOCK_SIZE:
        raise ValueError("ECB input must be a multiple of 16 bytes")
    return _ecb(_u8(block), _round_keys(key, decrypt=True), _SBOX).tobytes()


def pad(data: bytes) -> bytes:
    n = BLOCK_SIZE - len(data) % BLOCK_SIZE
    return bytes(data) + bytes([n]) * n


def unpad(data: bytes) -> bytes:
    if not data or len(data) % BLOCK_SIZE:
        raise CorruptCiphertext("corrupt ciphertext: bad length")
    n = data[-1]
    if n < 1 or n > BLOCK_SIZE or data[-n:] != bytes([n]) * n:
        raise CorruptCiphertext("corrupt ciphertext: bad padding")
    return data[:-n]


def sm4_encrypt(key: bytes, plaintext: bytes, iv: bytes) -> bytes:
    """CBC-encrypt ``plaintext``; output length is ``(len // 16 + 1) * 16``."""
    _check_iv(iv)
    return _cbc_encrypt(_u8(pad(plaintext)), _u8(iv), _round_keys(key), _SBOX).tobytes()


def sm4_decrypt(key: bytes, ciphertext: bytes, iv: bytes) -> bytes:
    _check_iv(iv)
    if not ciphertext or len(ciphertext) % BLOCK_SIZE:
        raise CorruptCiphertext("corrupt ciphertext: length is not a positive multiple of 16")
    raw = _cbc_decrypt(_u8(ciphertext), _u8(iv), _round_keys(key, decrypt=True), _SBOX).tobytes()
    return unpad(raw)


def seal(key: bytes, plaintext: bytes, iv: bytes) -> bytes:
    """``iv || CBC(plaintext)`` framing used on the wire."""
    return bytes(iv) + sm4_encrypt(key, plaintext, iv)


def open_sealed(key: bytes, blob: bytes) -> bytes:
    if len(blob) < 2 * BLOCK_SIZE:
        raise CorruptCiphertext("corrupt ciphertext: too short")
    return sm4_decrypt(key, blob[BLOCK_SIZE:], blob[:BLOCK_SIZE])
