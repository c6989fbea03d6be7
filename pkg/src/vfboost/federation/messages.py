"""Wire protocol: message kinds, envelope and payload codecs.

Everything on the wire is an explicit big-endian binary layout so that a
second implementation can interoperate; no pickling.

Envelope (all integers big-endian)::

    u8  version        (PROTOCOL_VERSION)
    u8  kind           (MessageKind)
    i32 epoch          (-1 outside training rounds)
    i32 layer          (-1 outside layer lockstep)
    u16 session_id length, utf-8 bytes
    u16 sender rank
    u32 payload length, payload bytes

On stream transports each envelope is framed by a u32 length prefix.
Big integers are encoded as ``u32 length + big-endian bytes``; bitmaps as
``u32 bit count + packed bytes (LSB-first within a byte)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from ..errors import ProtocolError

PROTOCOL_VERSION = 1


class MessageKind(IntEnum):
    ID_LIST = 1
    ID_ORDER = 2
    SESSION_SETUP = 3
    EPOCH_GH = 4
    SPLIT_PACKAGES = 5
    LAYER_PLAN = 6
    BEST_SPLITS = 7
    NODE_ASSIGN = 8
    PREDICT_QUERY = 9
    PREDICT_ROUTE = 10
    SESSION_END = 11


@dataclass
class Message:
    kind: MessageKind
    epoch: int
    layer: int
    session_id: str
    sender: int
    payload: bytes
    cipher_count: int = field(default=0, compare=False)  # accounting only

    def encode(self) -> bytes:
        sid = self.session_id.encode()
        return b"".join(
            [
                struct.pack(">BBiiH", PROTOCOL_VERSION, int(self.kind), self.epoch, self.layer,
                            len(sid)),
                sid,
                struct.pack(">HI", self.sender, len(self.payload)),
                self.payload,
            ]
        )

    @classmethod
    def decode(cls, raw: bytes) -> "Message":
        try:
            version, kind, epoch, layer, sid_len = struct.unpack_from(">BBiiH", raw, 0)
            off = 12 + sid_len
            sid = raw[12:off].decode()
            sender, plen = struct.unpack_from(">HI", raw, off)
            off += 6
            payload = raw[off : off + plen]
        except (struct.error, UnicodeDecodeError) as exc:
            raise ProtocolError(f"malformed envelope: {exc}")
        if version != PROTOCOL_VERSION:
            raise ProtocolError(f"unsupported protocol version {version}")
        if len(payload) != plen:
            raise ProtocolError("truncated payload")
        return cls(MessageKind(kind), epoch, layer, sid, sender, payload)


class Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def u8(self, v):
        self.parts.append(struct.pack(">B", v))

    def u16(self, v):
        self.parts.append(struct.pack(">H", v))

    def i16(self, v):
        self.parts.append(struct.pack(">h", v))

    def u32(self, v):
        self.parts.append(struct.pack(">I", v))

    def u64(self, v):
        self.parts.append(struct.pack(">Q", v))

    def f64(self, v):
        self.parts.append(struct.pack(">d", float(v)))

    def bigint(self, v: int):
        raw = v.to_bytes((v.bit_length() + 7) // 8 or 1, "big")
        self.u32(len(raw))
        self.parts.append(raw)

    def bitmap(self, bits: np.ndarray):
        bits = np.asarray(bits, dtype=bool)
        self.u32(bits.shape[0])
        self.parts.append(np.packbits(bits, bitorder="little").tobytes())

    def blob(self, raw: bytes):
        self.u32(len(raw))
        self.parts.append(raw)

    def getvalue(self) -> bytes:
        return b"".join(self.parts)


class Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.off = 0

    def _unpack(self, fmt, size):
        try:
            (v,) = struct.unpack_from(fmt, self.raw, self.off)
        except struct.error as exc:
            raise ProtocolError(f"truncated payload: {exc}")
        self.off += size
        return v

    def u8(self):
        return self._unpack(">B", 1)

    def u16(self):
        return self._unpack(">H", 2)

    def i16(self):
        return self._unpack(">h", 2)

    def u32(self):
        return self._unpack(">I", 4)

    def u64(self):
        return self._unpack(">Q", 8)

    def f64(self):
        return self._unpack(">d", 8)

    def bigint(self) -> int:
        n = self.u32()
        raw = self.raw[self.off : self.off + n]
        if len(raw) != n:
            raise ProtocolError("truncated big integer")
        self.off += n
        return int.from_bytes(raw, "big")

    def bitmap(self) -> np.ndarray:
        n_bits = self.u32()
        n_bytes = (n_bits + 7) // 8
        raw = self.raw[self.off : self.off + n_bytes]
        if len(raw) != n_bytes:
            raise ProtocolError("truncated bitmap")
        self.off += n_bytes
        return np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")[
            :n_bits
        ].astype(bool)

    def blob(self) -> bytes:
        n = self.u32()
        raw = self.raw[self.off : self.off + n]
        if len(raw) != n:
            raise ProtocolError("truncated blob")
        self.off += n
        return raw

    def done(self):
        if self.off != len(self.raw):
            raise ProtocolError(f"{len(self.raw) - self.off} unread payload bytes")


# -- payload codecs ----------------------------------------------------------
# Split-info payload kinds inside SPLIT_PACKAGES.
PAYLOAD_COMPRESSED = 0   # packed + cipher-compressed (capacity may be 1)
PAYLOAD_GH_PAIRS = 1     # packing disabled: separate g/h ciphertexts
PAYLOAD_MO_VECTORS = 2   # multi-output cipher vectors, no compression

OBJECTIVES = ("binary", "multiclass")
MODE_NAMES = ("default", "mix", "layered", "mo")


def encode_digests(digests: list[bytes]) -> bytes:
    w = Writer()
    w.u32(len(digests))
    for d in digests:
        if len(d) != 32:
            raise ProtocolError("id digests must be 32 bytes")
        w.parts.append(d)
    return w.getvalue()


def decode_digests(raw: bytes) -> list[bytes]:
    r = Reader(raw)
    n = r.u32()
    out = []
    for _ in range(n):
        d = r.raw[r.off : r.off + 32]
        if len(d) != 32:
            raise ProtocolError("truncated digest list")
        r.off += 32
        out.append(bytes(d))
    r.done()
    return out


def encode_session_setup(cfg: dict) -> bytes:
    w = Writer()
    w.u8(PROTOCOL_VERSION)
    w.u32(cfg["key_bits"])
    w.bigint(cfg["n"])
    w.u32(cfg["n_common"])
    w.u16(cfg["tree_num"])
    w.u16(cfg["max_depth"])
    w.u16(cfg["max_bins"])
    w.u8(MODE_NAMES.index(cfg["mode"]))
    w.u16(cfg["tree_per_party"])
    w.u16(cfg["guest_depth"])
    w.u16(cfg["host_depth"])
    w.u8(OBJECTIVES.index(cfg["objective"]))
    w.u16(cfg["n_classes"])
    w.f64(cfg["learning_rate"])
    w.f64(cfg["reg_lambda"])
    w.f64(cfg["min_gain"])
    w.u32(cfg["min_samples"])
    w.u8(cfg["precision"])
    flags = (
        (1 if cfg["packing"] else 0)
        | (2 if cfg["subtraction"] else 0)
        | (4 if cfg["compression"] else 0)
        | (8 if cfg["goss"] else 0)
    )
    w.u8(flags)
    w.f64(cfg["top_rate"])
    w.f64(cfg["other_rate"])
    w.u64(cfg["seed"])
    w.u16(cfg["n_hosts"])
    return w.getvalue()


def decode_session_setup(raw: bytes) -> dict:
    r = Reader(raw)
    out = {"proto_version": r.u8()}
    out["key_bits"] = r.u32()
    out["n"] = r.bigint()
    out["n_common"] = r.u32()
    out["tree_num"] = r.u16()
    out["max_depth"] = r.u16()
    out["max_bins"] = r.u16()
    out["mode"] = MODE_NAMES[r.u8()]
    out["tree_per_party"] = r.u16()
    out["guest_depth"] = r.u16()
    out["host_depth"] = r.u16()
    out["objective"] = OBJECTIVES[r.u8()]
    out["n_classes"] = r.u16()
    out["learning_rate"] = r.f64()
    out["reg_lambda"] = r.f64()
    out["min_gain"] = r.f64()
    out["min_samples"] = r.u32()
    out["precision"] = r.u8()
    flags = r.u8()
    out["packing"] = bool(flags & 1)
    out["subtraction"] = bool(flags & 2)
    out["compression"] = bool(flags & 4)
    out["goss"] = bool(flags & 8)
    out["top_rate"] = r.f64()
    out["other_rate"] = r.f64()
    out["seed"] = r.u64()
    out["n_hosts"] = r.u16()
    r.done()
    return out


def encode_pack_state(w: Writer, state) -> None:
    w.u8(state.r)
    w.f64(state.g_off)
    w.f64(state.g_max)
    w.f64(state.h_max)
    w.u16(state.b_g)
    w.u16(state.b_h)
    w.u16(state.b_gh)
    w.u32(state.n_instances)


def decode_pack_state(r: Reader):
    from ..encoding import PackState

    return PackState(
        r=r.u8(), g_off=r.f64(), g_max=r.f64(), h_max=r.f64(),
        b_g=r.u16(), b_h=r.u16(), b_gh=r.u16(), n_instances=r.u32(),
    )


def encode_epoch_gh(
    selected_mask: np.ndarray,
    state,
    capacity: int,
    packing: bool,
    ciphers: list,
    n_classes: int = 0,
    eta_c: int = 0,
    n_k: int = 0,
) -> tuple[bytes, int]:
    """Returns (payload, cipher_count).  ``ciphers`` is flat, in selected order."""
    w = Writer()
    w.u8((1 if packing else 0) | (2 if n_classes else 0))
    w.bitmap(selected_mask)
    encode_pack_state(w, state)
    w.u16(capacity)
    w.u16(n_classes)
    w.u16(eta_c)
    w.u16(n_k)
    w.u32(len(ciphers))
    for c in ciphers:
        w.bigint(c.value)
    return w.getvalue(), len(ciphers)


def decode_epoch_gh(raw: bytes) -> dict:
    r = Reader(raw)
    flags = r.u8()
    out = {
        "packing": bool(flags & 1),
        "mo": bool(flags & 2),
        "selected_mask": r.bitmap(),
    }
    out["pack_state"] = decode_pack_state(r)
    out["capacity"] = r.u16()
    out["n_classes"] = r.u16()
    out["eta_c"] = r.u16()
    out["n_k"] = r.u16()
    out["cipher_values"] = [r.bigint() for _ in range(r.u32())]
    r.done()
    return out


def encode_split_packages(payload_kind: int, per_node: dict) -> tuple[bytes, int]:
    """``per_node`` maps node_id -> list whose element shape depends on kind:

    - PAYLOAD_COMPRESSED: SplitInfoPackage
    - PAYLOAD_GH_PAIRS:   (split_id, sample_count, cipher_g, cipher_h)
    - PAYLOAD_MO_VECTORS: (split_id, sample_count, [ciphers])
    """
    w = Writer()
    w.u8(payload_kind)
    w.u32(len(per_node))
    n_ciphers = 0
    for node_id in sorted(per_node):
        w.u32(node_id)
        items = per_node[node_id]
        w.u32(len(items))
        for item in items:
            if payload_kind == PAYLOAD_COMPRESSED:
                w.bigint(item.cipher.value)
                n_ciphers += 1
                w.u16(len(item.split_ids))
                for sid, sc in zip(item.split_ids, item.sample_counts):
                    w.u64(sid)
                    w.u32(sc)
            elif payload_kind == PAYLOAD_GH_PAIRS:
                sid, sc, cg, ch = item
                w.u64(sid)
                w.u32(sc)
                w.bigint(cg.value)
                w.bigint(ch.value)
                n_ciphers += 2
            elif payload_kind == PAYLOAD_MO_VECTORS:
                sid, sc, vec = item
                w.u64(sid)
                w.u32(sc)
                w.u16(len(vec))
                for c in vec:
                    w.bigint(c.value)
                n_ciphers += len(vec)
            else:
                raise ProtocolError(f"unknown split payload kind {payload_kind}")
    return w.getvalue(), n_ciphers


def decode_split_packages(raw: bytes) -> tuple[int, dict]:
    r = Reader(raw)
    payload_kind = r.u8()
    n_nodes = r.u32()
    per_node: dict = {}
    for _ in range(n_nodes):
        node_id = r.u32()
        n_items = r.u32()
        items = []
        for _ in range(n_items):
            if payload_kind == PAYLOAD_COMPRESSED:
                value = r.bigint()
                n_entries = r.u16()
                ids, counts = [], []
                for _ in range(n_entries):
                    ids.append(r.u64())
                    counts.append(r.u32())
                items.append({"cipher_value": value, "split_ids": ids, "sample_counts": counts})
            elif payload_kind == PAYLOAD_GH_PAIRS:
                items.append(
                    {
                        "split_id": r.u64(),
                        "sample_count": r.u32(),
                        "g_value": r.bigint(),
                        "h_value": r.bigint(),
                    }
                )
            elif payload_kind == PAYLOAD_MO_VECTORS:
                sid = r.u64()
                sc = r.u32()
                vec = [r.bigint() for _ in range(r.u16())]
                items.append({"split_id": sid, "sample_count": sc, "values": vec})
            else:
                raise ProtocolError(f"unknown split payload kind {payload_kind}")
        per_node[node_id] = items
    r.done()
    return payload_kind, per_node


def encode_layer_plan(plan: dict) -> bytes:
    """plan: node_id -> owner rank, or -1 for a leaf decision."""
    w = Writer()
    w.u32(len(plan))
    for node_id in sorted(plan):
        w.u32(node_id)
        w.i16(plan[node_id])
    return w.getvalue()


def decode_layer_plan(raw: bytes) -> dict:
    r = Reader(raw)
    out = {r.u32(): r.i16() for _ in range(r.u32())}
    r.done()
    return out


def encode_best_splits(wins: list[tuple[int, int]]) -> bytes:
    w = Writer()
    w.u32(len(wins))
    for node_id, split_id in wins:
        w.u32(node_id)
        w.u64(split_id)
    return w.getvalue()


def decode_best_splits(raw: bytes) -> list[tuple[int, int]]:
    r = Reader(raw)
    out = [(r.u32(), r.u64()) for _ in range(r.u32())]
    r.done()
    return out


def encode_node_assign(node_id: int, owner: int, left_mask: np.ndarray) -> bytes:
    w = Writer()
    w.u32(node_id)
    w.u16(owner)
    w.bitmap(left_mask)
    return w.getvalue()


def decode_node_assign(raw: bytes) -> tuple[int, int, np.ndarray]:
    r = Reader(raw)
    node_id = r.u32()
    owner = r.u16()
    mask = r.bitmap()
    r.done()
    return node_id, owner, mask


def encode_predict_query(tree_index: int, node_id: int, split_id: int, indices) -> bytes:
    w = Writer()
    w.u32(tree_index)
    w.u32(node_id)
    w.u64(split_id)
    w.u32(len(indices))
    for i in indices:
        w.u32(int(i))
    return w.getvalue()


def decode_predict_query(raw: bytes) -> tuple[int, int, int, np.ndarray]:
    r = Reader(raw)
    tree_index = r.u32()
    node_id = r.u32()
    split_id = r.u64()
    idx = np.array([r.u32() for _ in range(r.u32())], dtype=np.int64)
    r.done()
    return tree_index, node_id, split_id, idx


def encode_predict_route(tree_index: int, node_id: int, left_bits: np.ndarray) -> bytes:
    w = Writer()
    w.u32(tree_index)
    w.u32(node_id)
    w.bitmap(left_bits)
    return w.getvalue()


def decode_predict_route(raw: bytes) -> tuple[int, int, np.ndarray]:
    r = Reader(raw)
    tree_index = r.u32()
    node_id = r.u32()
    bits = r.bitmap()
    r.done()
    return tree_index, node_id, bits


def encode_session_end(status: int = 0) -> bytes:
    w = Writer()
    w.u8(status)
    return w.getvalue()
