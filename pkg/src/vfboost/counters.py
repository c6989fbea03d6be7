"""Operation counters used to measure cipher-related work per party."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class CipherCounters:
    """Counts of primitive homomorphic operations performed with one key handle."""

    encryptions: int = 0
    decryptions: int = 0
    additions: int = 0
    scalar_muls: int = 0
    negations: int = 0
    obfuscations: int = 0

    def merge(self, other: "CipherCounters") -> None:
        self.encryptions += other.encryptions
        self.decryptions += other.decryptions
        self.additions += other.additions
        self.scalar_muls += other.scalar_muls
        self.negations += other.negations
        self.obfuscations += other.obfuscations

    def as_dict(self) -> dict:
        return {
            "encryptions": self.encryptions,
            "decryptions": self.decryptions,
            "additions": self.additions,
            "scalar_muls": self.scalar_muls,
            "negations": self.negations,
            "obfuscations": self.obfuscations,
        }


@dataclass
class TransportCounters:
    """Per-party accounting of protocol traffic."""

    messages_sent: int = 0
    messages_received: int = 0
    bytes_sent: int = 0
    bytes_received: int = 0
    ciphertexts_sent: int = 0
    sent_by_kind: dict = field(default_factory=dict)
    ciphertexts_by_kind: dict = field(default_factory=dict)

    def record_send(self, kind_name: str, n_bytes: int, n_ciphertexts: int) -> None:
        self.messages_sent += 1
        self.bytes_sent += n_bytes
        self.ciphertexts_sent += n_ciphertexts
        self.sent_by_kind[kind_name] = self.sent_by_kind.get(kind_name, 0) + 1
        if n_ciphertexts:
            self.ciphertexts_by_kind[kind_name] = (
                self.ciphertexts_by_kind.get(kind_name, 0) + n_ciphertexts
            )

    def record_recv(self, n_bytes: int) -> None:
        self.messages_received += 1
        self.bytes_received += n_bytes

    def as_dict(self) -> dict:
        return {
            "messages_sent": self.messages_sent,
            "messages_received": self.messages_received,
            "bytes_sent": self.bytes_sent,
            "bytes_received": self.bytes_received,
            "ciphertexts_sent": self.ciphertexts_sent,
            "sent_by_kind": dict(self.sent_by_kind),
            "ciphertexts_by_kind": dict(self.ciphertexts_by_kind),
        }
