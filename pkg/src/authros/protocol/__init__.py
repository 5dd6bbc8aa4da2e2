"""Key allocation, nested-envelope transfer, digest-anchored cache and checked queries."""
from .cache import CacheEntry, CiphertextCache
from .client import (
    Client,
    Credentials,
    SharedRecord,
    TransferEnvelope,
    UserIdentity,
    build_transfer,
    decrypt_shared,
    key_alloc_client,
    onchain_token,
    open_transfer,
    sign_request,
)
from .errors import *  # noqa: F401,F403
from .frames import Command, InnerFrame, KeyAllocMessage, OuterFrame, PlainRecord
from .keys import SystemKeyEntry, SystemKeyRing, publish_system_keys
from .pipeline import ShareFailure, monitor_and_share, share_events
from .server import AuthServer, GrantResult, ServerConfig, TransferReceipt, UserRecord, receive_transfer, register_user
