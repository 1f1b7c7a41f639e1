from agentry.relay.client import StoreClient, StoreError
from agentry.relay.protocol import DEFAULT_PORT
from agentry.relay.server import RelayServer

__all__ = ["DEFAULT_PORT", "RelayServer", "StoreClient", "StoreError"]
