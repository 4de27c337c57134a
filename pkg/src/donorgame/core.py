"""Donor game state machine.

Resource accounting, donation and punishment application, history
recording, and construction of the reputation trace shown to donors.
States are values: every operation returns a new state and never mutates
its input, so a single game run can be replayed or forked freely.
"""

from __future__ import annotations

from dataclasses import dataclass, replace


class GameError(Exception):
    """A game-protocol precondition was violated."""


@dataclass(frozen=True)
class AgentId:
    """Agent identity rendered as "G_M": generation index, member index."""

    generation: int
    member: int

    def __post_init__(self):
        if self.generation < 1 or self.member < 1:
            raise ValueError(f"agent id indices must be positive, got {self.generation}_{self.member}")

    def __str__(self) -> str:
        return f"{self.generation}_{self.member}"

    def __lt__(self, other: "AgentId") -> bool:
        # Lexicographic on the rendered form; this is the documented
        # ordering used by survivor tie-breaks.
        return str(self) < str(other)

    @classmethod
    def parse(cls, text: str) -> "AgentId":
        gen, sep, member = text.partition("_")
        if not sep or not gen.isdigit() or not member.isdigit():
            raise ValueError(f"malformed agent id: {text!r}")
        return cls(int(gen), int(member))


@dataclass(frozen=True)
class GameConfig:
    population_size: int = 12
    rounds: int = 12
    endowment: float = 10.0
    donation_multiplier: float = 2.0
    trace_depth: int = 3
    punishment_enabled: bool = False
    punishment_multiplier: float = 2.0

    def __post_init__(self):
        if self.population_size < 4 or self.population_size % 2 != 0:
            raise ValueError("population_size must be even and >= 4")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.endowment < 0:
            raise ValueError("endowment must be >= 0")
        # 1.0 (zero-sum transfers) is allowed so the theoretical-bound
        # oracle can evaluate it; below 1.0 transfers destroy resources.
        if self.donation_multiplier < 1.0:
            raise ValueError("donation_multiplier must be >= 1")
        if self.trace_depth < 0:
            raise ValueError("trace_depth must be >= 0")
        if self.punishment_multiplier <= 0:
            raise ValueError("punishment_multiplier must be > 0")


@dataclass(frozen=True)
class DonationEvent:
    round: int
    donor: AgentId
    recipient: AgentId
    amount: float
    donor_resources_before: float
    fraction: float
    punishment_spend: float = 0.0


@dataclass(frozen=True)
class TraceEntry:
    """One observed past donor-action in a reputation chain."""

    round: int
    actor: AgentId
    actor_recipient: AgentId
    fraction: float
    punished: bool = False


Trace = tuple  # tuple[TraceEntry, ...]


@dataclass(frozen=True)
class GameState:
    config: GameConfig
    round: int
    balances: dict  # AgentId -> float, keys exactly the population
    history: tuple  # tuple[DonationEvent, ...]

    @property
    def total_resources(self) -> float:
        return sum(self.balances.values())


def init_game(config: GameConfig, agents: list) -> GameState:
    if len(agents) != config.population_size:
        raise GameError(
            f"population mismatch: config expects {config.population_size} agents, got {len(agents)}"
        )
    if len(set(agents)) != len(agents):
        raise GameError("duplicate agent ids")
    return GameState(
        config=config,
        round=1,
        balances={a: float(config.endowment) for a in agents},
        history=(),
    )


def apply_donation(state: GameState, donor: AgentId, recipient: AgentId, amount: float) -> GameState:
    if donor == recipient:
        raise GameError("donor and recipient must differ")
    if donor not in state.balances or recipient not in state.balances:
        raise GameError("unknown agent")
    if amount < 0:
        raise GameError(f"negative donation amount {amount}")
    before = state.balances[donor]
    if amount > before:
        raise GameError(f"donation {amount} exceeds donor balance {before}")
    balances = dict(state.balances)
    balances[donor] = before - amount
    balances[recipient] = balances[recipient] + state.config.donation_multiplier * amount
    event = DonationEvent(
        round=state.round,
        donor=donor,
        recipient=recipient,
        amount=amount,
        donor_resources_before=before,
        fraction=(amount / before) if before > 0 else 0.0,
    )
    return replace(state, balances=balances, history=state.history + (event,))


def apply_punishment(state: GameState, punisher: AgentId, target: AgentId, spend: float) -> GameState:
    if not state.config.punishment_enabled:
        raise GameError("punishment is disabled in this game")
    if spend < 0:
        raise GameError(f"negative punishment spend {spend}")
    balance = state.balances.get(punisher)
    if balance is None or target not in state.balances:
        raise GameError("unknown agent")
    if spend > balance:
        raise GameError(f"punishment spend {spend} exceeds balance {balance}")
    # The spend is recorded on the punisher's donation event for the
    # current round, which must already exist and not carry a spend.
    idx = None
    for i in range(len(state.history) - 1, -1, -1):
        ev = state.history[i]
        if ev.round != state.round:
            break
        if ev.donor == punisher:
            idx = i
            break
    if idx is None:
        raise GameError(f"no donation event for {punisher} in round {state.round}")
    ev = state.history[idx]
    if ev.recipient != target:
        raise GameError("punishment target must be this round's recipient")
    if ev.punishment_spend != 0.0:
        raise GameError("punishment already applied for this encounter")
    removed = min(state.config.punishment_multiplier * spend, state.balances[target])
    balances = dict(state.balances)
    balances[punisher] = balance - spend
    balances[target] = balances[target] - removed
    history = list(state.history)
    history[idx] = replace(ev, punishment_spend=spend)
    return replace(state, balances=balances, history=tuple(history))


def advance_round(state: GameState) -> GameState:
    expected = state.config.population_size // 2
    this_round = sum(1 for ev in state.history if ev.round == state.round)
    if this_round != expected:
        raise GameError(
            f"round {state.round} has {this_round} events, expected {expected}"
        )
    return replace(state, round=state.round + 1)


def build_trace(history, recipient: AgentId, current_round: int, trace_depth: int) -> tuple:
    """Reputation chain for a recipient: their own last donor-action,
    then that partner's preceding action, and so on.

    Length is min(current_round - 1, trace_depth), so rounds 1..4 see
    0, 1, 2 and then trace_depth entries.
    """

    length = min(current_round - 1, trace_depth)
    if length <= 0:
        return ()
    by_round_donor = {(ev.round, ev.donor): ev for ev in history}
    entries = []
    target = recipient
    for k in range(1, length + 1):
        ev = by_round_donor.get((current_round - k, target))
        if ev is None:
            raise GameError(
                f"missing donor-action for {target} in round {current_round - k}"
            )
        entries.append(
            TraceEntry(
                round=ev.round,
                actor=ev.donor,
                actor_recipient=ev.recipient,
                fraction=ev.fraction,
                punished=ev.punishment_spend > 0,
            )
        )
        target = ev.recipient
    return tuple(entries)
