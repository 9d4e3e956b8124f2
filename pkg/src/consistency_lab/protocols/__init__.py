"""Replication protocol implementations over the simulation kernel."""

from . import cops, dynamo, eventual, gentlerain

PROTOCOLS = {
    "cops": cops,
    "gentlerain": gentlerain,
    "dynamo": dynamo,
    "eventual": eventual,
}


def get_protocol(name: str):
    try:
        return PROTOCOLS[name]
    except KeyError:
        raise ValueError(f"unknown protocol {name!r}") from None
