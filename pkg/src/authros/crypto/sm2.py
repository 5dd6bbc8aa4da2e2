"""SM2 elliptic-curve public-key cryptography (GB/T 32918-2016).

Covers key generation and public-key validation, digital signatures with the
Z_A identity prefix, public-key encryption (C1 || C3 || C2 ordering) and the
SM3-based key derivation function.  Arithmetic runs on the recommended
256-bit curve; internal point math uses Jacobian coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass

from .entropy import Entropy, default_entropy
from .sm3 import sm3_hash

P = 0xFFFFFFFEFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFF00000000FFFFFFFFFFFFFFFF
A = 0xFFFFFFFEFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFF00000000FFFFFFFFFFFFFFFC
B = 0x28E9FA9E9D9F5E344D5A9E4BCF6509A7F39789F515AB8F92DDBCBD414D940E93
N = 0xFFFFFFFEFFFFFFFFFFFFFFFFFFFFFFFF7203DF6B21C6052B53BBF40939D54123
GX = 0x32C4AE2C1F1981195F9904466A39C9948FE30BBFF2660BE1715A4589334C74C7
GY = 0xBC3736A2F4F6779C59BDCEE36B692153D0A9877CC62A474002DF32E52139F0A0

DEFAULT_ID = b"1234567812345678"
POINT_SIZE = 65
SIGNATURE_SIZE = 64


class InvalidCiphertext(ValueError):
    pass


class InvalidPoint(ValueError):
    pass


class ZeroKdfOutput(ValueError):
    """The KDF produced an all-zero mask; the caller must reject or retry."""


@dataclass(frozen=True)
class CurvePoint:
    x: int = 0
    y: int = 0
    infinity: bool = False

    def is_on_curve(self) -> bool:
        if self.infinity:
            return True
        if not (0 <= self.x < P and 0 <= self.y < P):
            return False
        return (self.y * self.y - (self.x * self.x * self.x + A * self.x + B)) % P == 0

    def to_bytes(self) -> bytes:
        """Uncompressed ``04 || x || y`` encoding."""
        if self.infinity:
            raise InvalidPoint("the point at infinity has no uncompressed encoding")
        return b"\x04" + self.x.to_bytes(32, "big") + self.y.to_bytes(32, "big")

    @classmethod
    def from_bytes(cls, data: bytes) -> "CurvePoint":
        if len(data) != POINT_SIZE or data[0] != 4:
            raise InvalidPoint("expected a 65-byte uncompressed point")
        pt = cls(int.from_bytes(data[1:33], "big"), int.from_bytes(data[33:], "big"))
        if not pt.is_on_curve():
            raise InvalidPoint("point is not on the SM2 curve")
        return pt

    def __add__(self, other: "CurvePoint") -> "CurvePoint":
        return _to_affine(_jadd(_to_jac(self), _to_jac(other)))

    def __neg__(self) -> "CurvePoint":
        return self if self.infinity else CurvePoint(self.x, (-self.y) % P)

    def __rmul__(self, k: int) -> "CurvePoint":
        return scalar_mult(k, self)


INFINITY = CurvePoint(infinity=True)
G = CurvePoint(GX, GY)


@dataclass(frozen=True)
class Sm2KeyPair:
    private_key: int
    public_key: CurvePoint


@dataclass(frozen=True)
class Sm2Signature:
    r: int
    s: int

    def to_bytes(self) -> bytes:
        return self.r.to_bytes(32, "big") + self.s.to_bytes(32, "big")

    @classmethod
    def from_bytes(cls, data: bytes) -> "Sm2Signature":
        if len(data) != SIGNATURE_SIZE:
            raise ValueError("SM2 signature must be 64 bytes")
        return cls(int.from_bytes(data[:32], "big"), int.from_bytes(data[32:], "big"))


@dataclass(frozen=True)
class Sm2Ciphertext:
    c1: CurvePoint
    c3: bytes
    c2: bytes

    def to_bytes(self) -> bytes:
        return self.c1.to_bytes() + self.c3 + self.c2

    @classmethod
    def from_bytes(cls, data: bytes) -> "Sm2Ciphertext":
        if len(data) < POINT_SIZE + 32 + 1:
            raise InvalidCiphertext("invalid ciphertext: too short")
        try:
            c1 = CurvePoint.from_bytes(data[:POINT_SIZE])
        except InvalidPoint as exc:
            raise InvalidCiphertext(f"invalid ciphertext: {exc}") from None
        return cls(c1, data[POINT_SIZE:POINT_SIZE + 32], data[POINT_SIZE + 32:])


# --- Jacobian arithmetic (a = -3) ------------------------------------------

_JINF = (1, 1, 0)


def _to_jac(pt: CurvePoint):
    return _JINF if pt.infinity else (pt.x, pt.y, 1)


def _to_affine(j) -> CurvePoint:
    x, y, z = j
    if z == 0:
        return INFINITY
    zi = pow(z, -1, P)
    zi2 = zi * zi % P
    return CurvePoint(x * zi2 % P, y * zi2 * zi % P)


def _jdouble(j):
    x, y, z = j
    if z == 0 or y == 0:
        return _JINF
    yy = y * y % P
    s = 4 * x * yy % P
    zz = z * z % P
    m = 3 * (x - zz) * (x + zz) % P
    x3 = (m * m - 2 * s) % P
    y3 = (m * (s - x3) - 8 * yy * yy) % P
    z3 = 2 * y * z % P
    return (x3, y3, z3)


def _jadd(p1, p2):
    x1, y1, z1 = p1
    x2, y2, z2 = p2
    if z1 == 0:
        return p2
    if z2 == 0:
        return p1
    z1z1 = z1 * z1 % P
    z2z2 = z2 * z2 % P
    u1 = x1 * z2z2 % P
    u2 = x2 * z1z1 % P
    s1 = y1 * z2 * z2z2 % P
    s2 = y2 * z1 * z1z1 % P
    if u1 == u2:
        if s1 != s2:
            return _JINF
        return _jdouble(p1)
    h = (u2 - u1) % P
    r = (s2 - s1) % P
    hh = h * h % P
    hhh = h * hh % P
    v = u1 * hh % P
    x3 = (r * r - hhh - 2 * v) % P
    y3 = (r * (v - x3) - s1 * hhh) % P
    z3 = h * z1 * z2 % P
    return (x3, y3, z3)


def _jadd_affine(p1, x2, y2):
    """Mixed addition: Jacobian ``p1`` plus affine ``(x2, y2)``."""
    x1, y1, z1 = p1
    if z1 == 0:
        return (x2, y2, 1)
    z1z1 = z1 * z1 % P
    u2 = x2 * z1z1 % P
    s2 = y2 * z1 * z1z1 % P
    if x1 == u2:
        if y1 != s2:
            return _JINF
        return _jdouble(p1)
    h = (u2 - x1) % P
    r = (s2 - y1) % P
    hh = h * h % P
    hhh = h * hh % P
    v = x1 * hh % P
    x3 = (r * r - hhh - 2 * v) % P
    y3 = (r * (v - x3) - y1 * hhh) % P
    return (x3, y3, h * z1 % P)


# Fixed-base table: _GTABLE[i][j] = affine (j * 16**i) * G, j in 1..15.
def _build_gtable():
    table = []
    base = (GX, GY, 1)
    for _ in range(64):
        row = [None]
        acc = base
        for j in range(1, 16):
            pt = _to_affine(acc)
            row.append((pt.x, pt.y))
            acc = _jadd(acc, base)
        table.append(row)
        for _ in range(4):
            base = _jdouble(base)
    return table


_GTABLE = _build_gtable()


def _mul_g_jac(k: int):
    acc = _JINF
    i = 0
    while k:
        digit = k & 15
        if digit:
            x, y = _GTABLE[i][digit]
            acc = _jadd_affine(acc, x, y)
        k >>= 4
        i += 1
    return acc


def _mul_jac(k: int, pt: CurvePoint):
    """Left-to-right fixed 4-bit window multiplication."""
    if pt.infinity or k == 0:
        return _JINF
    base = _to_jac(pt)
    table = [_JINF, base]
    for _ in range(14):
        table.append(_jadd(table[-1], base))
    acc = _JINF
    for shift in range((k.bit_length() + 3) // 4 * 4 - 4, -1, -4):
        for _ in range(4):
            acc = _jdouble(acc)
        digit = (k >> shift) & 15
        if digit:
            acc = _jadd(acc, table[digit])
    return acc


def scalar_mult(k: int, pt: CurvePoint = G) -> CurvePoint:
    """Return ``[k]pt``; ``k`` is used as-is (may be ``>= n``)."""
    if k < 0:
        return scalar_mult(-k, -pt)
    if pt == G:
        return _to_affine(_mul_g_jac(k % N))
    return _to_affine(_mul_jac(k, pt))


def verify_public_key(pub: CurvePoint) -> bool:
    """Public-key validation: not infinity, coordinates in range, on curve, order n."""
    if pub.infinity or not pub.is_on_curve():
        return False
    return _mul_jac(N, pub)[2] == 0


def sm2_keygen(entropy: Entropy | None = None) -> Sm2KeyPair:
    rng = default_entropy(entropy)
    d = 1 + rng.randbelow(N - 2)  # [1, n-2]
    return keypair_from_private(d)


def keypair_from_private(d: int) -> Sm2KeyPair:
    if not 1 <= d <= N - 2:
        raise ValueError("private key out of range [1, n-2]")
    return Sm2KeyPair(d, scalar_mult(d, G))


# --- KDF --------------------------------------------------------------------

def sm2_kdf(z: bytes, klen_bits: int) -> bytes:
    """Counter-mode SM3 expansion of ``z`` to ``klen_bits`` bits.

    Raises :class:`ZeroKdfOutput` when every output bit is zero.
    """
    if klen_bits <= 0:
        raise ValueError("klen must be positive")
    nbytes = (klen_bits + 7) // 8
    out = bytearray()
    ct = 1
    while len(out) < nbytes:
        out += sm3_hash(z + ct.to_bytes(4, "big"))
        ct += 1
    out = out[:nbytes]
    if klen_bits % 8:
        out[-1] &= (0xFF << (8 - klen_bits % 8)) & 0xFF
    if not any(out):
        raise ZeroKdfOutput("KDF output is all zero")
    return bytes(out)


# --- signatures -------------------------------------------------------------

def identity_digest(identity: bytes, pub: CurvePoint) -> bytes:
    """Z_A = SM3(ENTL || ID || a || b || xG || yG || xA || yA)."""
    entl = len(identity) * 8
    if entl > 0xFFFF:
        raise ValueError("identity label too long")
    parts = [entl.to_bytes(2, "big"), identity]
    for v in (A, B, GX, GY, pub.x, pub.y):
        parts.append(v.to_bytes(32, "big"))
    return sm3_hash(b"".join(parts))


def _message_hash(identity: bytes, pub: CurvePoint, message: bytes) -> int:
    return int.from_bytes(sm3_hash(identity_digest(identity, pub) + message), "big")


def sm2_sign(
    private_key: int,
    identity: bytes,
    message: bytes,
    entropy: Entropy | None = None,
    public_key: CurvePoint | None = None,
) -> Sm2Signature:
    rng = default_entropy(entropy)
    if public_key is None:
        public_key = scalar_mult(private_key, G)
    e = _message_hash(identity, public_key, message)
    inv = pow(1 + private_key, -1, N)
    while True:
        k = 1 + rng.randbelow(N - 1)
        x1 = _to_affine(_mul_g_jac(k)).x
        r = (e + x1) % N
        if r == 0 or r + k == N:
            continue
        s = inv * (k - r * private_key) % N
        if s:
            return Sm2Signature(r, s)


def sign_with_nonce(private_key: int, identity: bytes, message: bytes, k: int) -> Sm2Signature:
    """Deterministic signing with a caller-chosen ``k`` (known-answer tests only)."""
    pub = scalar_mult(private_key, G)
    e = _message_hash(identity, pub, message)
    x1 = _to_affine(_mul_g_jac(k)).x
    r = (e + x1) % N
    s = pow(1 + private_key, -1, N) * (k - r * private_key) % N
    if r == 0 or r + k == N or s == 0:
        raise ValueError("degenerate nonce")
    return Sm2Signature(r, s)


def sm2_verify(public_key: CurvePoint, identity: bytes, message: bytes, sig: Sm2Signature) -> bool:
    r, s = sig.r, sig.s
    if not (1 <= r < N and 1 <= s < N):
        return False
    if public_key.infinity or not public_key.is_on_curve():
        return False
    e = _message_hash(identity, public_key, message)
    t = (r + s) % N
    if t == 0:
        return False
    pt = _to_affine(_jadd(_mul_g_jac(s), _mul_jac(t, public_key)))
    if pt.infinity:
        return False
    return (e + pt.x) % N == r


# --- encryption -------------------------------------------------------------

def _xy(pt: CurvePoint) -> tuple[bytes, bytes]:
    return pt.x.to_bytes(32, "big"), pt.y.to_bytes(32, "big")


def sm2_encrypt(recipient: CurvePoint, plaintext: bytes, entropy: Entropy | None = None) -> Sm2Ciphertext:
    if not plaintext:
        raise ValueError("plaintext must be non-empty")
    if recipient.infinity or not recipient.is_on_curve():
        raise InvalidPoint("recipient key is not a valid curve point")
    rng = default_entropy(entropy)
    while True:
        k = 1 + rng.randbelow(N - 1)
        c1 = scalar_mult(k, G)
        x2, y2 = _xy(scalar_mult(k, recipient))
        try:
            t = sm2_kdf(x2 + y2, 8 * len(plaintext))
        except ZeroKdfOutput:
            continue
        c2 = bytes(a ^ b for a, b in zip(plaintext, t))
        c3 = sm3_hash(x2 + plaintext + y2)
        return Sm2Ciphertext(c1, c3, c2)


def sm2_decrypt(private_key: int, ct: Sm2Ciphertext | bytes) -> bytes:
    if isinstance(ct, (bytes, bytearray)):
        ct = Sm2Ciphertext.from_bytes(bytes(ct))
    if ct.c1.infinity or not ct.c1.is_on_curve():
        raise InvalidCiphertext("invalid ciphertext: C1 is not on the curve")
    if not ct.c2:
        raise InvalidCiphertext("invalid ciphertext: empty payload")
    shared = scalar_mult(private_key, ct.c1)
    if shared.infinity:
        raise InvalidCiphertext("invalid ciphertext: degenerate shared point")
    x2, y2 = _xy(shared)
    try:
        t = sm2_kdf(x2 + y2, 8 * len(ct.c2))
    except ZeroKdfOutput:
        raise InvalidCiphertext("invalid ciphertext: all-zero key stream") from None
    m = bytes(a ^ b for a, b in zip(ct.c2, t))
    if sm3_hash(x2 + m + y2) != ct.c3:
        raise InvalidCiphertext("invalid ciphertext: C3 integrity check failed")
    return m
