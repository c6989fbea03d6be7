"""Training-mechanism modes: default, mix, layered and multi-output.

Modes only change scheduling — which party's candidates compete for which
tree/layer — never the encoding or wire contracts.
"""

from __future__ import annotations

from .errors import ConfigError

MODES = ("default", "mix", "layered", "mo")


def validate_mode(mode: str, n_hosts: int, guest_depth: int, host_depth: int, max_depth: int):
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
    if mode == "mix" and n_hosts < 1:
        raise ConfigError("mix mode needs at least one host party")
    if mode == "layered":
        if guest_depth < 0 or host_depth < 0:
            raise ConfigError("layered depths must be non-negative")
        if guest_depth + host_depth != max_depth:
            raise ConfigError(
                f"layered mode requires guest_depth + host_depth == max_depth "
                f"({guest_depth} + {host_depth} != {max_depth})"
            )


def tree_owner(tree_round: int, n_parties: int, tree_per_party: int) -> int:
    """Mix-mode round-robin: each party owns ``tree_per_party`` consecutive trees."""
    return (tree_round // tree_per_party) % n_parties


def candidate_parties(
    mode: str,
    depth: int,
    n_parties: int,
    tree_round: int = 0,
    tree_per_party: int = 1,
    host_depth: int = 0,
) -> list[int]:
    """Ranks whose split candidates compete at this tree depth.

    Rank 0 is the guest.  In mix mode the whole tree belongs to one party; in
    layered mode hosts own the first ``host_depth`` layers and the guest the
    rest.
    """
    if mode == "mix":
        return [tree_owner(tree_round, n_parties, tree_per_party)]
    if mode == "layered":
        if depth < host_depth:
            return [r for r in range(1, n_parties)]
        return [0]
    return list(range(n_parties))


def round_participants(
    mode: str,
    tree_round: int,
    n_parties: int,
    tree_per_party: int,
    host_depth: int,
    max_depth: int,
) -> list[int]:
    """Host ranks that take any part in this tree round (receive encrypted
    gradients, compute histograms, or stay synchronized)."""
    ranks: set[int] = set()
    for depth in range(max_depth):
        ranks.update(
            candidate_parties(mode, depth, n_parties, tree_round, tree_per_party, host_depth)
        )
    return sorted(r for r in ranks if r != 0)
