"""Prompt assembly for donor agents.

Templates live under templates/<version>/ as plain text with named
placeholders; the placeholder list for each template is part of the
public contract and documented in docs/prompts.md. Resource amounts are
rendered to at most two decimal places with trailing zeros trimmed, and
donation fractions as integer percents.
"""

from __future__ import annotations

from importlib import resources

from .core import GameConfig

PROMPT_VERSION = "v1"


def _template(name: str) -> str:
    path = resources.files("donorgame").joinpath(f"templates/{PROMPT_VERSION}/{name}.txt")
    return path.read_text(encoding="utf-8").rstrip("\n")


def format_units(value: float) -> str:
    text = f"{value:.2f}".rstrip("0").rstrip(".")
    return text if text else "0"


def format_percent(fraction: float) -> str:
    return str(round(fraction * 100))


def render_system_prompt(config: GameConfig) -> str:
    text = _template("system").format(
        endowment=format_units(config.endowment),
        multiplier=format_units(config.donation_multiplier),
    )
    if config.punishment_enabled:
        text += " " + _render_punishment_sentence(config)
    return text


def _render_punishment_sentence(config: GameConfig) -> str:
    return _template("punishment").format(
        punishment_multiplier=format_units(config.punishment_multiplier)
    )


# The chain explanation and worked example grow with the configured trace
# depth; depth 3 reproduces the canonical wording.

_EXPLANATION_SENTENCES = [
    "You will see what the recipient (let's call them A) did in the immediately preceding round only.",
    "You will also see what A's partner from that round (let's call them B) did in their preceding round.",
]

_DEPTH_WORDS = {1: "one round", 2: "two rounds", 3: "three rounds"}

_EXAMPLE_STEPS = [
    "You know: In round {r}, A donated X% to B.",
    "You also know: In round {r}, B donated Y% to C.",
    "And finally: In round {r}, C donated Z% to D.",
]


def _trace_explanation(depth: int) -> str:
    if depth == 0:
        return "You will receive no information about the recipient's previous behavior."
    sentences = _EXPLANATION_SENTENCES[: min(depth, 2)]
    if depth >= 3:
        span = _DEPTH_WORDS.get(depth, f"{depth} rounds")
        sentences.append(f"This chain continues for at most {span} back.")
    sentences.append(
        "Important: You do NOT have access to multiple rounds of information about A directly. "
        "You only know what A did in the single most recent round."
    )
    return " ".join(sentences)


def _trace_example(depth: int) -> str:
    if depth == 0:
        return "Example: You are paired with A. You have no information about what A did in earlier rounds."
    steps = min(depth, 3)
    now = steps + 1
    parts = [f"Example (assuming it's now round {now}): You are paired with A."]
    for k in range(steps):
        parts.append(_EXAMPLE_STEPS[k].format(r=now - 1 - k))
    if now > 2:
        earlier = " or ".join(str(r) for r in range(1, now - 1))
        parts.append(
            "Remember: This is all the information you have. "
            f"You don't know what A did in rounds {earlier}, only in round {now - 1}."
        )
    else:
        parts.append(
            "Remember: This is all the information you have. "
            f"You only know what A did in round {now - 1}."
        )
    return " ".join(parts)


def render_strategy_prompt(agent, generation: int, survivor_advice, *, trace_depth: int = 3) -> str:
    """Strategy-elicitation prompt. Generation 1 asks for a fresh
    strategy; later generations show each survivor's strategy with its
    final score."""

    if generation == 1:
        if survivor_advice:
            raise ValueError("generation 1 takes no survivor advice")
        return _template("strategy_first").format(
            name=str(agent),
            trace_explanation=_trace_explanation(trace_depth),
            trace_example=_trace_example(trace_depth),
        )
    if not survivor_advice:
        raise ValueError(f"generation {generation} requires survivor advice")
    lines = [
        f'{i}. "{strategy}" (final score: {score:.2f})'
        for i, (strategy, score) in enumerate(survivor_advice, start=1)
    ]
    return _template("strategy_later").format(
        name=str(agent),
        advice_lines="\n".join(lines),
        trace_explanation=_trace_explanation(trace_depth),
        trace_example=_trace_example(trace_depth),
    )


def render_trace_sentence(entry, punishment_enabled: bool = False) -> str:
    text = (
        f"In round {entry.round}, {entry.actor} donated "
        f"{format_percent(entry.fraction)}% of their resources to {entry.actor_recipient}."
    )
    if punishment_enabled and entry.punished:
        text += f" They also spent resources to punish {entry.actor_recipient}."
    return text


def render_donation_prompt(ctx) -> str:
    """Donation decision prompt for one encounter; `ctx` is a
    DonationContext. Empty traces omit the history paragraph."""

    if ctx.trace:
        sentences = " ".join(
            render_trace_sentence(e, ctx.punishment_enabled) for e in ctx.trace
        )
        trace_paragraph = (
            f"Here is what {ctx.recipient} and their earlier partners did in previous rounds: "
            f"{sentences} "
        )
    else:
        trace_paragraph = ""
    if ctx.punishment_enabled:
        sentence = _template("punishment").format(
            punishment_multiplier=format_units(ctx.punishment_multiplier)
        )
        punishment_paragraph = sentence + "\n\n"
    else:
        punishment_paragraph = ""
    return _template("donation").format(
        name=str(ctx.donor.id),
        strategy=ctx.donor.strategy_text,
        generation=ctx.generation,
        round=ctx.round,
        recipient=str(ctx.recipient),
        recipient_resources=format_units(ctx.recipient_resources),
        trace_paragraph=trace_paragraph,
        punishment_paragraph=punishment_paragraph,
        donor_resources=format_units(ctx.donor_resources),
    )
