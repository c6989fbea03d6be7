"""Party-to-party transports: in-process queues and TCP sockets.

Both transports move the same serialized envelopes, so byte/cipher counters
and codec behaviour are identical; a model trained over sockets is
bit-identical to one trained in process given the same seeds.

Receives are strict lockstep: the caller names the peer, the acceptable
kinds and (optionally) the expected epoch/layer; anything else raises
:class:`ProtocolError`.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading
import time

from ..counters import TransportCounters
from ..errors import ProtocolError, TransportError
from .messages import Message, MessageKind

DEFAULT_TIMEOUT = 120.0


class Transport:
    """Common receive validation and accounting."""

    def __init__(self, rank: int, session_id: str):
        self.rank = rank
        self.session_id = session_id
        self.counters = TransportCounters()

    # subclasses implement _send_bytes / _recv_bytes
    def _send_bytes(self, dst: int, raw: bytes) -> None:
        raise NotImplementedError

    def _recv_bytes(self, src: int, timeout: float) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def send(self, dst: int, msg: Message) -> None:
        raw = msg.encode()
        self.counters.record_send(msg.kind.name, len(raw), msg.cipher_count)
        self._send_bytes(dst, raw)

    def recv(
        self,
        src: int,
        kinds,
        epoch: int | None = None,
        layer: int | None = None,
        timeout: float = DEFAULT_TIMEOUT,
    ) -> Message:
        raw = self._recv_bytes(src, timeout)
        self.counters.record_recv(len(raw))
        msg = Message.decode(raw)
        allowed = {kinds} if isinstance(kinds, MessageKind) else set(kinds)
        if msg.kind not in allowed:
            raise ProtocolError(
                f"rank {self.rank}: expected {sorted(k.name for k in allowed)} from "
                f"{src}, got {msg.kind.name}"
            )
        if msg.sender != src:
            raise ProtocolError(f"sender rank {msg.sender} arrived on channel from {src}")
        if msg.session_id != self.session_id:
            raise ProtocolError(f"foreign session id {msg.session_id!r}")
        if epoch is not None and msg.epoch != epoch:
            raise ProtocolError(
                f"out-of-order message: expected epoch {epoch}, got {msg.epoch} "
                f"({msg.kind.name} from {src})"
            )
        if layer is not None and msg.layer != layer:
            raise ProtocolError(
                f"out-of-order message: expected layer {layer}, got {msg.layer} "
                f"({msg.kind.name} from {src})"
            )
        return msg


class InProcHub:
    """Shared mailbox fabric for all parties of one in-process session."""

    def __init__(self, n_parties: int, session_id: str):
        self.n_parties = n_parties
        self.session_id = session_id
        self.queues = {
            (src, dst): queue.Queue()
            for src in range(n_parties)
            for dst in range(n_parties)
            if src != dst
        }
        self.taps: list = []  # callables (src, dst, Message)
        self._abort: Exception | None = None

    def abort(self, exc: Exception) -> None:
        self._abort = exc

    def transport(self, rank: int) -> "InProcTransport":
        return InProcTransport(self, rank)


class InProcTransport(Transport):
    def __init__(self, hub: InProcHub, rank: int):
        super().__init__(rank, hub.session_id)
        self.hub = hub

    def _send_bytes(self, dst: int, raw: bytes) -> None:
        if self.hub._abort is not None:
            raise TransportError(f"session aborted: {self.hub._abort}")
        if (self.rank, dst) not in self.hub.queues:
            raise TransportError(f"no channel from {self.rank} to {dst}")
        if self.hub.taps:
            msg = Message.decode(raw)
            for tap in self.hub.taps:
                tap(self.rank, dst, msg)
        self.hub.queues[(self.rank, dst)].put(raw)

    def _recv_bytes(self, src: int, timeout: float) -> bytes:
        q = self.hub.queues.get((src, self.rank))
        if q is None:
            raise TransportError(f"no channel from {src} to {self.rank}")
        deadline = time.monotonic() + timeout
        while True:
            if self.hub._abort is not None:
                raise TransportError(f"session aborted: {self.hub._abort}")
            try:
                return q.get(timeout=min(0.25, max(0.01, deadline - time.monotonic())))
            except queue.Empty:
                if time.monotonic() >= deadline:
                    raise TransportError(
                        f"rank {self.rank} timed out waiting for rank {src}"
                    )


class SocketTransport(Transport):
    """One TCP connection per party pair; frames are u32-length-prefixed.

    Rank *i* listens for connections from every higher rank and dials every
    lower rank, so the full mesh comes up without a coordinator.
    """

    def __init__(
        self,
        rank: int,
        session_id: str,
        addresses: dict[int, tuple[str, int]],
        connect_timeout: float = 20.0,
    ):
        super().__init__(rank, session_id)
        self.addresses = addresses
        self.socks: dict[int, socket.socket] = {}
        self._buffers: dict[int, bytearray] = {}
        self._lock = threading.Lock()
        self._listen(connect_timeout)

    def _listen(self, connect_timeout: float) -> None:
        higher = [r for r in self.addresses if r > self.rank]
        lower = [r for r in self.addresses if r < self.rank]
        server = None
        if higher:
            host, port = self.addresses[self.rank]
            server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            server.bind((host, port))
            server.listen(len(higher))
        # Dial lower ranks (their servers are already up or will be shortly).
        for r in lower:
            deadline = time.monotonic() + connect_timeout
            while True:
                try:
                    sock = socket.create_connection(self.addresses[r], timeout=2.0)
                    break
                except OSError:
                    if time.monotonic() >= deadline:
                        raise TransportError(f"cannot reach rank {r} at {self.addresses[r]}")
                    time.sleep(0.05)
            sock.sendall(struct.pack(">H", self.rank))
            self.socks[r] = sock
            self._buffers[r] = bytearray()
        if server is not None:
            server.settimeout(connect_timeout)
            try:
                for _ in higher:
                    sock, _addr = server.accept()
                    (peer,) = struct.unpack(">H", self._read_exact_sock(sock, 2, connect_timeout))
                    self.socks[peer] = sock
                    self._buffers[peer] = bytearray()
            except socket.timeout:
                raise TransportError("timed out waiting for peer connections")
            finally:
                server.close()

    @staticmethod
    def _read_exact_sock(sock: socket.socket, n: int, timeout: float) -> bytes:
        sock.settimeout(timeout)
        chunks = bytearray()
        while len(chunks) < n:
            try:
                part = sock.recv(n - len(chunks))
            except socket.timeout:
                raise TransportError("socket receive timed out")
            if not part:
                raise TransportError("peer closed the connection")
            chunks.extend(part)
        return bytes(chunks)

    def _send_bytes(self, dst: int, raw: bytes) -> None:
        sock = self.socks.get(dst)
        if sock is None:
            raise TransportError(f"no connection to rank {dst}")
        with self._lock:
            try:
                sock.sendall(struct.pack(">I", len(raw)) + raw)
            except OSError as exc:
                raise TransportError(f"send to rank {dst} failed: {exc}")

    def _recv_bytes(self, src: int, timeout: float) -> bytes:
        sock = self.socks.get(src)
        if sock is None:
            raise TransportError(f"no connection to rank {src}")
        header = self._read_exact_sock(sock, 4, timeout)
        (length,) = struct.unpack(">I", header)
        return self._read_exact_sock(sock, length, timeout)

    def close(self) -> None:
        for sock in self.socks.values():
            try:
                sock.close()
            except OSError:
                pass
        self.socks.clear()
