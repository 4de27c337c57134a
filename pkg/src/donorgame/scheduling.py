"""Round pairings for one game run.

A seeded shuffle splits the population into two equal groups. Group A
members are donors in odd rounds and recipients in even rounds; group B
the reverse. Within each orientation the matchings follow a cyclic
offset (a 1-factorization of the complete bipartite graph), so no
ordered (donor, recipient) pair ever repeats. An unordered pair can
therefore meet at most twice, once in each role; the even-round offsets
are staggered by half a cycle so a role-swapped rematch never happens in
consecutive rounds.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .core import AgentId


class ScheduleError(Exception):
    """The requested schedule cannot satisfy the pairing constraints."""


@dataclass(frozen=True)
class Schedule:
    group_a: tuple  # donors in odd rounds
    group_b: tuple  # donors in even rounds
    rounds: tuple   # rounds[r] = tuple of (donor, recipient) pairs

    @property
    def num_rounds(self) -> int:
        return len(self.rounds)

    def ordered_pairs(self):
        return [pair for matching in self.rounds for pair in matching]


def make_schedule(agent_ids: list, rounds: int, seed: int) -> Schedule:
    n = len(agent_ids)
    if n < 2 or n % 2 != 0:
        raise ScheduleError(f"population must be even and >= 2, got {n}")
    if len(set(agent_ids)) != n:
        raise ScheduleError("duplicate agent ids")
    if rounds < 1:
        raise ScheduleError("rounds must be >= 1")
    half = n // 2
    capacity = 2 * half
    if rounds > capacity:
        raise ScheduleError(
            f"{rounds} rounds exceed ordered-pair capacity of {capacity} for {n} agents"
        )
    rng = random.Random(seed)
    shuffled = rng.sample(list(agent_ids), n)
    group_a = tuple(shuffled[:half])
    group_b = tuple(shuffled[half:])
    matchings = []
    for r in range(1, rounds + 1):
        if r % 2 == 1:
            offset = (r - 1) // 2
            pairs = tuple((group_a[i], group_b[(i + offset) % half]) for i in range(half))
        else:
            # Two cyclic matchings share an unordered pair only when their
            # orientation-adjusted offsets coincide, so keeping each
            # even-round offset off its neighbours' values prevents any
            # role-swapped rematch in consecutive rounds (impossible only
            # when half < 3, where two parallel classes are all there is).
            k = r // 2 - 1
            unordered = (k + 2) % half if half >= 3 else (k + 1) % half
            offset = (-unordered) % half
            pairs = tuple((group_b[j], group_a[(j + offset) % half]) for j in range(half))
        matchings.append(pairs)
    return Schedule(group_a=group_a, group_b=group_b, rounds=tuple(matchings))


def swap_roles(schedule: Schedule) -> Schedule:
    """Reverse every pairing so each agent plays the other role in every
    round; in particular, final-round recipients become final-round donors."""

    return Schedule(
        group_a=schedule.group_b,
        group_b=schedule.group_a,
        rounds=tuple(
            tuple((recipient, donor) for donor, recipient in matching)
            for matching in schedule.rounds
        ),
    )


def check_schedule(schedule: Schedule) -> None:
    """Raise ScheduleError if any schedule invariant is violated."""

    population = set(schedule.group_a) | set(schedule.group_b)
    if set(schedule.group_a) & set(schedule.group_b):
        raise ScheduleError("role groups overlap")
    if len(schedule.group_a) != len(schedule.group_b):
        raise ScheduleError("role groups differ in size")
    seen_pairs = set()
    for r, matching in enumerate(schedule.rounds, start=1):
        donors = [d for d, _ in matching]
        recipients = [x for _, x in matching]
        if set(donors) | set(recipients) != population or len(set(donors + recipients)) != len(population):
            raise ScheduleError(f"round {r} is not a perfect matching")
        expected_donors = set(schedule.group_a) if r % 2 == 1 else set(schedule.group_b)
        if set(donors) != expected_donors:
            raise ScheduleError(f"round {r} violates role alternation")
        for pair in matching:
            if pair in seen_pairs:
                raise ScheduleError(f"ordered pair {pair[0]}->{pair[1]} repeats")
            seen_pairs.add(pair)
