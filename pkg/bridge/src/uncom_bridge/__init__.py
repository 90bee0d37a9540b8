"""Perception bridge: live models behind the NDJSON stdio protocol."""

from .backends import LiveBackend, SyntheticBackend, make_backend
from .protocol import BridgeServer
from .record import RecordError, record

__version__ = "0.1.0"
