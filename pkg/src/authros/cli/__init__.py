"""Operator command line: ``authros <command>``."""
from .keystore import Keystore, KeystoreError
from .main import build_parser, main

__all__ = ["Keystore", "KeystoreError", "build_parser", "main"]
