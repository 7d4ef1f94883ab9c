"""Kendall tau-b rank correlation between per-system score vectors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

SystemScores = Mapping[str, float]


class CorrelationError(ValueError):
    pass


@dataclass(frozen=True)
class TauResult:
    tau: float
    n_systems: int
    concordant: int
    discordant: int
    ties_a: int  # pairs tied in a only
    ties_b: int  # pairs tied in b only


def kendall_tau(a: SystemScores, b: SystemScores) -> TauResult:
    """Tie-aware tau-b: (C - D) / sqrt((C + D + T_a) * (C + D + T_b)).

    Pairs tied in both vectors count toward neither T term. Both vectors must
    cover the same system tags, at least two of them; a vector with all values
    tied has an undefined tau and raises.
    """
    if set(a) != set(b):
        only_a = sorted(set(a) - set(b))
        only_b = sorted(set(b) - set(a))
        raise CorrelationError(
            f"system tag sets differ (only in a: {only_a}, only in b: {only_b})"
        )
    tags = sorted(a)
    n = len(tags)
    if n < 2:
        raise CorrelationError("correlation needs at least 2 systems")
    concordant = discordant = ties_a = ties_b = 0
    for i in range(n):
        for j in range(i + 1, n):
            da = a[tags[i]] - a[tags[j]]
            db = b[tags[i]] - b[tags[j]]
            if da == 0 and db == 0:
                continue
            if da == 0:
                ties_a += 1
            elif db == 0:
                ties_b += 1
            elif (da > 0) == (db > 0):
                concordant += 1
            else:
                discordant += 1
    denom_a = concordant + discordant + ties_a
    denom_b = concordant + discordant + ties_b
    if denom_a == 0 or denom_b == 0:
        raise CorrelationError("tau undefined: one vector is entirely tied")
    tau = (concordant - discordant) / math.sqrt(denom_a * denom_b)
    return TauResult(
        tau=tau,
        n_systems=n,
        concordant=concordant,
        discordant=discordant,
        ties_a=ties_a,
        ties_b=ties_b,
    )


def rank_systems(scores: SystemScores) -> list[tuple[str, float]]:
    """Display order: descending score, ties broken by tag."""
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
