"""Guest/host protocol: messages, transports, party state machines, shards."""

from .guest import GuestParty
from .host import HostParty
from .model import GuestModel, HostModel, shard_filename
from .session import SessionResult, run_inproc_prediction, run_inproc_training
from .transport import InProcHub, SocketTransport

__all__ = [
    "GuestParty",
    "HostParty",
    "GuestModel",
    "HostModel",
    "shard_filename",
    "SessionResult",
    "run_inproc_prediction",
    "run_inproc_training",
    "InProcHub",
    "SocketTransport",
]
