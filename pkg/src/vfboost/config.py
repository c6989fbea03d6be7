"""Training configuration: YAML schema, validation, defaults.

Config file keys (YAML, flat except ``parties``/``goss``)::

    session_id: demo            # string tag echoed in artifacts
    transport: inproc           # inproc | tcp
    seed: 42
    mode: default               # default | mix | layered | mo
    objective: binary           # binary | multiclass
    n_classes: 2
    tree_num: 25
    max_depth: 5
    learning_rate: 0.3
    max_bins: 32
    reg_lambda: 0.1
    precision: 53               # fixed-point bits, 10..60
    key_bits: 1024
    min_gain: 1.0e-4
    min_samples: 2
    goss: {enabled: false, top_rate: 0.2, other_rate: 0.1}
    packing: true               # gradient/hessian bit packing
    subtraction: true           # sibling histogram subtraction
    compression: true           # ciphertext compression
    tree_per_party: 1           # mix mode
    guest_depth: 2              # layered mode
    host_depth: 3               # layered mode (guest_depth + host_depth == max_depth)
    output_dir: runs/demo
    parties:                    # first entry must be the guest
      - {role: guest, data: guest.csv, format: csv, address: 127.0.0.1:7401}
      - {role: host,  data: host1.csv, format: csv, address: 127.0.0.1:7402}
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .local import GBDTParams
from .modes import validate_mode
from .paillier import MIN_KEY_BITS


@dataclass
class PartySpec:
    role: str
    data: str = ""
    format: str = "csv"
    address: str = ""

    def host_port(self) -> tuple[str, int]:
        if ":" not in self.address:
            raise ConfigError(f"party address {self.address!r} is not host:port")
        host, port = self.address.rsplit(":", 1)
        return host, int(port)


@dataclass
class TrainConfig:
    session_id: str = "session"
    transport: str = "inproc"
    seed: int = 0
    mode: str = "default"
    objective: str = "binary"
    n_classes: int = 2
    tree_num: int = 25
    max_depth: int = 5
    learning_rate: float = 0.3
    max_bins: int = 32
    reg_lambda: float = 0.1
    precision: int = 53
    key_bits: int = 1024
    min_gain: float = 1e-4
    min_samples: int = 2
    goss_enabled: bool = False
    top_rate: float = 0.2
    other_rate: float = 0.1
    packing: bool = True
    subtraction: bool = True
    compression: bool = True
    tree_per_party: int = 1
    guest_depth: int = 2
    host_depth: int = 3
    output_dir: str = "."
    parties: list[PartySpec] = field(default_factory=list)

    @property
    def n_hosts(self) -> int:
        return len(self.parties) - 1

    def validate(self) -> "TrainConfig":
        if self.transport not in ("inproc", "tcp"):
            raise ConfigError(f"unknown transport {self.transport!r}")
        if not self.parties:
            raise ConfigError("no parties configured")
        if self.parties[0].role != "guest" or any(
            p.role != "host" for p in self.parties[1:]
        ):
            raise ConfigError("parties[0] must be the guest; the rest hosts")
        if self.n_hosts < 1:
            raise ConfigError("need at least one host party")
        if self.key_bits < MIN_KEY_BITS or self.key_bits % 2:
            raise ConfigError(f"key_bits must be even and >= {MIN_KEY_BITS}")
        if not 10 <= self.precision <= 60:
            raise ConfigError("precision must be in [10, 60]")
        if not 2 <= self.max_bins <= 255:
            raise ConfigError("max_bins must be in [2, 255]")
        if self.tree_num < 1 or self.max_depth < 1:
            raise ConfigError("tree_num and max_depth must be >= 1")
        if self.objective not in ("binary", "multiclass"):
            raise ConfigError(f"unknown objective {self.objective!r}")
        if self.objective == "multiclass" and self.n_classes < 2:
            raise ConfigError("multiclass needs n_classes >= 2")
        mode_depths = self.mode == "layered"
        validate_mode(
            self.mode,
            self.n_hosts,
            self.guest_depth if mode_depths else 0,
            self.host_depth if mode_depths else 0,
            self.max_depth if mode_depths else 0,
        )
        if not self.packing and self.compression:
            warnings.warn("compression requires packing; disabling compression")
            self.compression = False
        if self.mode == "mo" and self.compression:
            # multi-output split infos travel as cipher vectors
            self.compression = False
        return self

    def to_params(self) -> GBDTParams:
        return GBDTParams(
            n_trees=self.tree_num,
            max_depth=self.max_depth,
            learning_rate=self.learning_rate,
            max_bins=self.max_bins,
            reg_lambda=self.reg_lambda,
            min_gain=self.min_gain,
            min_samples=self.min_samples,
            objective=self.objective,
            n_classes=self.n_classes,
            multi_output=self.mode == "mo",
            goss_enabled=self.goss_enabled,
            top_rate=self.top_rate,
            other_rate=self.other_rate,
            seed=self.seed,
            use_subtraction=self.subtraction,
            mode=self.mode,
            tree_per_party=self.tree_per_party,
            guest_depth=self.guest_depth if self.mode == "layered" else 0,
            host_depth=self.host_depth if self.mode == "layered" else 0,
        )

    def echo_dict(self) -> dict:
        return {
            "mode": self.mode,
            "objective": self.objective,
            "n_classes": self.n_classes,
            "tree_num": self.tree_num,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "max_bins": self.max_bins,
            "reg_lambda": self.reg_lambda,
            "precision": self.precision,
            "key_bits": self.key_bits,
            "min_gain": self.min_gain,
            "min_samples": self.min_samples,
            "goss": self.goss_enabled,
            "top_rate": self.top_rate,
            "other_rate": self.other_rate,
            "packing": self.packing,
            "subtraction": self.subtraction,
            "compression": self.compression,
            "tree_per_party": self.tree_per_party,
            "guest_depth": self.guest_depth,
            "host_depth": self.host_depth,
            "seed": self.seed,
        }


def config_from_dict(doc: dict) -> TrainConfig:
    doc = dict(doc)
    goss = doc.pop("goss", {}) or {}
    parties_raw = doc.pop("parties", [])
    known = {f.name for f in TrainConfig.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = TrainConfig(**doc)
    if goss:
        cfg.goss_enabled = bool(goss.get("enabled", False))
        cfg.top_rate = float(goss.get("top_rate", cfg.top_rate))
        cfg.other_rate = float(goss.get("other_rate", cfg.other_rate))
    cfg.parties = [
        PartySpec(
            role=p.get("role", ""),
            data=p.get("data", ""),
            format=p.get("format", "csv"),
            address=p.get("address", ""),
        )
        for p in parties_raw
    ]
    return cfg.validate()


def load_config(path: str) -> TrainConfig:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return config_from_dict(doc)
