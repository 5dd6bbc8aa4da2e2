"""SM2 / SM3 / SM4 and Keccak-256 primitives."""
from .entropy import Entropy, SeededEntropy, SystemEntropy
from .keccak import keccak256
from .sm2 import (
    DEFAULT_ID,
    G,
    INFINITY,
    N,
    CurvePoint,
    InvalidCiphertext,
    InvalidPoint,
    Sm2Ciphertext,
    Sm2KeyPair,
    Sm2Signature,
    ZeroKdfOutput,
    keypair_from_private,
    scalar_mult,
    sm2_decrypt,
    sm2_encrypt,
    sm2_kdf,
    sm2_keygen,
    sm2_sign,
    sm2_verify,
    verify_public_key,
)
from .sm3 import sm3_hash
from .sm4 import CorruptCiphertext, open_sealed, seal, sm4_decrypt, sm4_encrypt

__all__ = [
    "DEFAULT_ID", "G", "INFINITY", "N", "CorruptCiphertext", "CurvePoint", "Entropy",
    "InvalidCiphertext", "InvalidPoint", "SeededEntropy", "Sm2Ciphertext", "Sm2KeyPair",
    "Sm2Signature", "SystemEntropy", "ZeroKdfOutput", "keccak256", "keypair_from_private",
    "open_sealed", "scalar_mult", "seal", "sm2_decrypt", "sm2_encrypt", "sm2_kdf", "sm2_keygen",
    "sm2_sign", "sm2_verify", "sm3_hash", "sm4_decrypt", "sm4_encrypt", "verify_public_key",
]
