"""TCP client for the langreach environment server."""

from .client import (  # noqa: F401
    PROTOCOL_VERSION,
    ClientError,
    ProtocolError,
    RemoteReachEnv,
    TransportError,
    VersionMismatchError,
)

__version__ = "0.1.0"
