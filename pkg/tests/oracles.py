"""Independent reference computations used to freeze expected test values.

Everything here is deliberately brute force and shares no code path with the
implementations it checks: interval intersection over exact rationals for
one-dimensional hull emptiness, exhaustive monotone-table enumeration, and a
direct double-loop subset scan for plus sets.
"""

from __future__ import annotations

import itertools
import random
from fractions import Fraction

import numpy as np

from toomlab.rules import RuleSpec, monotone_closure


def interval_eroder_verdict(offsets: list[int], sets: list[tuple[int, ...]]) -> bool:
    """1-d oracle: hulls are intervals; empty intersection iff max(min) > min(max)."""
    los = [min(Fraction(offsets[i]) for i in z) for z in sets]
    his = [max(Fraction(offsets[i]) for i in z) for z in sets]
    return max(los) > min(his)


def brute_force_plus_sets(rule: RuleSpec) -> list[tuple[int, ...]]:
    """All inclusion-minimal plus sets by scanning every subset twice."""
    R = rule.size
    is_plus = {}
    for mask in range(1 << R):
        # all-plus on the subset, -1 elsewhere: worst case by monotonicity,
        # but verify against *every* completion to stay implementation-free
        forced = True
        members = [i for i in range(R) if (mask >> i) & 1]
        for other in range(1 << R):
            cfg = mask | (other & ~mask)
            if not rule.table[cfg]:
                forced = False
                break
        is_plus[mask] = forced
    minimal = []
    for mask in range(1 << R):
        if not is_plus[mask]:
            continue
        if any(is_plus[mask & ~(1 << i)] for i in range(R) if (mask >> i) & 1):
            continue
        minimal.append(tuple(i for i in range(R) if (mask >> i) & 1))
    return sorted(minimal)


def all_monotone_tables(R: int) -> list[np.ndarray]:
    """Every monotone non-constant truth table on R inputs (feasible R <= 4)."""
    tables = []
    for value in range(1 << (1 << R)):
        table = np.array([(value >> i) & 1 for i in range(1 << R)], dtype=np.uint8)
        if table.min() == table.max():
            continue
        ok = True
        for cfg in range(1 << R):
            for i in range(R):
                if not (cfg >> i) & 1 and table[cfg] > table[cfg | (1 << i)]:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            tables.append(table)
    return tables


def random_monotone_table(R: int, rng: random.Random) -> np.ndarray:
    """Random monotone non-constant table: upward closure of random seeds."""
    while True:
        n_seeds = rng.randint(1, max(2, (1 << R) // 4))
        seeds = [rng.randrange(1, 1 << R) for _ in range(n_seeds)]
        table = monotone_closure(R, seeds)
        if table.min() != table.max():
            return table


def random_offsets_1d(R: int, rng: random.Random, span: int = 6) -> tuple[int, ...]:
    return tuple(sorted(rng.sample(range(-span, span + 1), R)))


def random_rule(rng: random.Random, max_R: int = 8, max_d: int = 3) -> RuleSpec:
    d = rng.randint(1, max_d)
    R = rng.randint(1, max_R)
    offsets = set()
    while len(offsets) < R:
        offsets.add(tuple(rng.randint(-2, 2) for _ in range(d)))
    return RuleSpec(
        dimension=d,
        neighborhood=tuple(sorted(offsets)),
        table=random_monotone_table(R, rng),
    )


def enumerate_1d_rules_exhaustive(R: int, offsets: tuple[int, ...]) -> list[RuleSpec]:
    return [
        RuleSpec(dimension=1, neighborhood=tuple((o,) for o in offsets), table=t)
        for t in all_monotone_tables(R)
    ]
