"""Global best-split selection over candidates from every party.

Runs on the guest in the federated protocol and inside the single-process
plaintext trainer.  Ties on gain break deterministically toward the lowest
(party rank, per-party candidate key).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tree import mo_gain, split_gain


@dataclass
class Candidate:
    """A decoded split candidate ready for gain evaluation.

    ``key`` orders candidates within one party (guest: feature/bin derived;
    hosts: the anonymous split id).  ``feature``/``bin_index`` are only known
    for candidates owned by the evaluating party.
    """

    party_rank: int
    key: int
    g_left: object
    h_left: object
    left_count: int
    feature: int = -1
    bin_index: int = -1
    split_id: int = -1
    gain: float = float("-inf")


def guest_key(feature: int, bin_index: int) -> int:
    return (feature << 20) | bin_index


def select_best_split(
    candidates: list[Candidate],
    g_total,
    h_total,
    reg_lambda: float,
    min_gain: float,
    multi_output: bool = False,
) -> Candidate | None:
    """Evaluate gains and return the winner, or None when no candidate beats
    ``min_gain``."""
    best = None
    for cand in sorted(candidates, key=lambda c: (c.party_rank, c.key)):
        if multi_output:
            g_l = np.asarray(cand.g_left)
            h_l = np.asarray(cand.h_left)
            cand.gain = mo_gain(
                (g_total, h_total), (g_l, h_l), (g_total - g_l, h_total - h_l), reg_lambda
            )
        else:
            cand.gain = split_gain(
                cand.g_left,
                cand.h_left,
                g_total - cand.g_left,
                h_total - cand.h_left,
                g_total,
                h_total,
                reg_lambda,
            )
        if cand.gain > min_gain and (best is None or cand.gain > best.gain):
            best = cand
    return best
