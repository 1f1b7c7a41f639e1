"""Mailbox exchanges: in-process and relay-backed distributed."""

from agentry.exchange.base import Exchange, ExchangeClient
from agentry.exchange.dist import DistClient, DistExchange
from agentry.exchange.local import LocalClient, LocalExchange

__all__ = ["DistClient", "DistExchange", "Exchange", "ExchangeClient", "LocalClient", "LocalExchange"]
