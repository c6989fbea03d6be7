"""Closed-form operation-count estimates for one tree, baseline vs optimized.

Counts are abstract operation units (homomorphic ops, encryptions/decryptions,
transferred ciphertexts), not seconds.  ``n_nodes`` is ``2**height``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class CostParams:
    n_instances: int
    n_features: int
    n_bins: int
    height: int
    compress_capacity: int = 1

    def __post_init__(self):
        for name in ("n_instances", "n_features", "n_bins"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.height < 0:
            raise ConfigError("height must be non-negative")
        if self.compress_capacity < 1:
            raise ConfigError("compress_capacity must be >= 1")

    @property
    def n_nodes(self) -> int:
        return 2 ** self.height


@dataclass(frozen=True)
class CostEstimate:
    comp: float
    ende: float
    comm: float


def estimate_baseline(p: CostParams) -> CostEstimate:
    """Separate g/h ciphertexts, direct histogram builds, per-candidate decryption."""
    hist_terms = p.n_bins * p.n_features * p.n_nodes
    comp = 2 * p.n_instances * p.height * p.n_features + 2 * hist_terms
    ende = 2 * p.n_instances + 2 * hist_terms
    comm = 2 * p.n_instances + 2 * hist_terms
    return CostEstimate(comp=float(comp), ende=float(ende), comm=float(comm))


def estimate_optimized(p: CostParams) -> CostEstimate:
    """Packed g/h, sibling subtraction, compressed split-info decryption."""
    hist_terms = p.n_bins * p.n_features * p.n_nodes
    comp = 0.5 * p.n_instances * p.height * p.n_features + hist_terms
    ende = p.n_instances + hist_terms / p.compress_capacity
    return CostEstimate(comp=comp, ende=ende, comm=ende)


def reduction(baseline: float, optimized: float) -> float:
    return 1.0 - optimized / baseline


def cost_report(p: CostParams) -> str:
    base = estimate_baseline(p)
    opt = estimate_optimized(p)
    lines = [
        f"cost estimate: n_i={p.n_instances} n_f={p.n_features} n_b={p.n_bins} "
        f"h={p.height} n_n={p.n_nodes} capacity={p.compress_capacity}",
        f"{'':14}{'baseline':>16}{'optimized':>16}{'reduction':>12}",
    ]
    for name, b, o in (
        ("compute", base.comp, opt.comp),
        ("enc/dec", base.ende, opt.ende),
        ("comm", base.comm, opt.comm),
    ):
        lines.append(f"{name:<14}{b:>16.4g}{o:>16.4g}{100 * reduction(b, o):>11.2f}%")
    return "\n".join(lines)
