"""Passphrase-protected identity keystore.

The file is JSON.  The name and account address stay readable; the signing
key, data key, token and granted keys are sealed with SM4 under a key derived
from the passphrase with PBKDF2-HMAC-SHA256.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from ..crypto import CorruptCiphertext, keypair_from_private, open_sealed, seal, sm3_hash
from ..crypto.entropy import Entropy, default_entropy
from ..protocol import Client, Credentials, IdentityError, SharedRecord, UserIdentity

FORMAT = "authros-keystore/1"
KDF_ITERATIONS = 100_000


class KeystoreError(IdentityError):
    message = "keystore error"


def derive_key(passphrase: str, salt: bytes, iterations: int = KDF_ITERATIONS) -> bytes:
    return hashlib.pbkdf2_hmac("sha256", passphrase.encode(), salt, iterations, dklen=16)


@dataclass
class Keystore:
    client: Client

    def secrets(self) -> dict:
        c, ident = self.client.creds, self.client.identity
        return {
            "d": format(c.keypair.private_key, "064x"),
            "P": c.keypair.public_key.to_bytes().hex(),
            "K": c.sm4_key.hex(),
            "token": c.token.hex(),
            "sigma": ident.sigma.hex(),
            "address": ident.addr.hex(),
            "granted": {k: v.hex() for k, v in sorted(ident.v.items())},
            "shared": [[r.digest.hex(), r.capture_time, r.block_height] for r in ident.d],
        }

    def dump(self, passphrase: str, entropy: Entropy | None = None, iterations: int = KDF_ITERATIONS) -> str:
        entropy = default_entropy(entropy)
        salt = entropy.token_bytes(16)
        key = derive_key(passphrase, salt, iterations)
        body = json.dumps(self.secrets(), sort_keys=True).encode()
        doc = {
            "format": FORMAT,
            "name": self.client.name,
            "address": "0x" + self.client.identity.addr.hex(),
            "kdf": {"algorithm": "pbkdf2-hmac-sha256", "salt": salt.hex(), "iterations": iterations},
            "check": sm3_hash(key)[:8].hex(),
            "ciphertext": seal(key, body, entropy.token_bytes(16)).hex(),
        }
        return json.dumps(doc, indent=2) + "\n"

    def save(self, path: str | Path, passphrase: str, entropy: Entropy | None = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dump(passphrase, entropy))
        return path

    @classmethod
    def loads(cls, text: str, passphrase: str, entropy: Entropy | None = None) -> "Keystore":
        try:
            doc = json.loads(text)
            if doc.get("format") != FORMAT:
                raise KeystoreError(f"unsupported keystore format {doc.get('format')!r}")
            kdf = doc["kdf"]
            key = derive_key(passphrase, bytes.fromhex(kdf["salt"]), int(kdf["iterations"]))
            if sm3_hash(key)[:8].hex() != doc["check"]:
                raise KeystoreError("wrong passphrase")
            s = json.loads(open_sealed(key, bytes.fromhex(doc["ciphertext"])))
        except KeystoreError:
            raise
        except (ValueError, KeyError, TypeError, CorruptCiphertext) as exc:
            raise KeystoreError(f"unreadable keystore: {exc}") from None
        pair = keypair_from_private(int(s["d"], 16))
        if pair.public_key.to_bytes().hex() != s["P"]:
            raise KeystoreError("keystore public key does not match its private key")
        creds = Credentials(doc["name"], bytes.fromhex(s["token"]), pair, bytes.fromhex(s["K"]))
        ident = UserIdentity(
            doc["name"], bytes.fromhex(s["sigma"]), bytes.fromhex(s["address"]),
            {k: bytes.fromhex(v) for k, v in s["granted"].items()},
            [SharedRecord(bytes.fromhex(d), t, h) for d, t, h in s["shared"]],
        )
        return cls(Client(creds, ident, entropy))

    @classmethod
    def load(cls, path: str | Path, passphrase: str, entropy: Entropy | None = None) -> "Keystore":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise KeystoreError(f"cannot read keystore {path}: {exc.strerror}") from None
        return cls.loads(text, passphrase, entropy)
