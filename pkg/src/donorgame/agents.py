"""Agent profiles, decision contexts, and free-text answer parsing.

Three backends produce decisions: "llm" and "mock" render the donation
prompt, obtain a completion through the gateway, and parse it; "scripted"
evaluates a strategy program directly, bypassing text. Whatever the raw
answer looks like, the parsed decision is always legal: non-negative
amounts whose total never exceeds the donor's resources.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .core import AgentId
from .dsl import EvalContext, StrategyProgram, evaluate, evaluate_punishment
from .gateway import Gateway, make_request
from .prompts import render_donation_prompt

BACKENDS = ("llm", "scripted", "mock")


@dataclass
class AgentProfile:
    id: AgentId
    strategy_text: str
    backend: str
    program: StrategyProgram | None = None  # scripted backend only

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "scripted" and self.program is None:
            raise ValueError("scripted agents need a parsed strategy program")


@dataclass
class DonationContext:
    donor: AgentProfile
    recipient: AgentId
    recipient_resources: float
    donor_resources: float
    round: int
    generation: int
    trace: tuple
    punishment_enabled: bool = False
    punishment_multiplier: float = 2.0


@dataclass
class Decision:
    donation: float
    punishment_spend: float = 0.0
    raw_response: str = ""
    clamped: bool = False
    parse_failed: bool = False
    request_id: str | None = None


_NUMBER_RE = re.compile(r"(?<![\w.])(\d+(?:\.\d+)?)(\s*%)?(?![\w])")

_DONATE_WORDS = (
    "donat", "give", "gave", "giving", "contribut", "offer",
    "transfer", "share", "send", "allocat", "gift",
)
_PUNISH_WORDS = ("punish", "penal", "take away", "deduct", "fine")


def _keyword_positions(lower: str, words) -> list:
    positions = []
    for word in words:
        start = 0
        while True:
            idx = lower.find(word, start)
            if idx < 0:
                break
            positions.append(idx)
            start = idx + 1
    return positions


def parse_decision(raw: str, donor_resources: float, punishment_enabled: bool) -> Decision:
    """Extract donation and punishment amounts from a free-text answer.

    Each number is associated with the nearest donate- or punish-flavored
    keyword; the last number of each class wins. Percentages convert via
    the donor's resources. A number with no nearby keyword is kept as a
    fallback donation, and a response with no usable number degrades to a
    zero donation flagged as a parse failure. Totals above the donor's
    resources are proportionally clamped.
    """

    if not raw:
        raise ValueError("empty response text")
    lower = raw.lower()
    donate_pos = _keyword_positions(lower, _DONATE_WORDS)
    punish_pos = _keyword_positions(lower, _PUNISH_WORDS)

    donation = None
    fallback = None
    spend = None
    for match in _NUMBER_RE.finditer(raw):
        value = float(match.group(1))
        if match.group(2):
            value = donor_resources * value / 100.0
        center = match.start()
        d_near = min((abs(center - p) for p in donate_pos), default=None)
        p_near = min((abs(center - p) for p in punish_pos), default=None)
        window = 80
        d_ok = d_near is not None and d_near <= window
        p_ok = p_near is not None and p_near <= window
        if p_ok and (not d_ok or p_near <= d_near):
            spend = value
        elif d_ok:
            donation = value
        else:
            fallback = value

    parse_failed = False
    if donation is None:
        donation = fallback
    if donation is None:
        donation = 0.0
        parse_failed = spend is None
    if spend is None or not punishment_enabled:
        spend = 0.0

    donation = max(donation, 0.0)
    spend = max(spend, 0.0)
    clamped = False
    total = donation + spend
    if total > donor_resources:
        clamped = True
        scale = (donor_resources / total) if total > 0 else 0.0
        donation *= scale
        spend *= scale
    # Guard the rounding of the proportional scale: the pair must satisfy
    # donation + spend <= donor_resources exactly as the ledger computes it.
    donation = min(donation, donor_resources)
    spend = min(spend, donor_resources - donation)
    return Decision(
        donation=donation,
        punishment_spend=spend,
        raw_response=raw,
        clamped=clamped,
        parse_failed=parse_failed,
    )


_STRATEGY_MARKER = "My strategy will be"


def extract_strategy_sentence(raw: str) -> str:
    """Keep the final "My strategy will be ..." sentence when the model
    prefaces it with reasoning; otherwise store the whole response."""

    idx = raw.rfind(_STRATEGY_MARKER)
    text = raw[idx:] if idx >= 0 else raw
    return " ".join(text.split())


def decide(
    ctx: DonationContext,
    *,
    system_text: str = "",
    gateway: Gateway | None = None,
    jitter_rng=None,
) -> Decision:
    """One donation decision. Scripted agents evaluate their program;
    gateway-backed agents get the rendered prompt completed and parsed."""

    profile = ctx.donor
    if profile.backend == "scripted":
        eval_ctx = EvalContext(
            round=ctx.round,
            trace=ctx.trace,
            donor_resources=ctx.donor_resources,
            rng=jitter_rng,
        )
        fraction = evaluate(profile.program, eval_ctx)
        donation = fraction * ctx.donor_resources
        spend = 0.0
        if ctx.punishment_enabled:
            spend_fraction = evaluate_punishment(profile.program, eval_ctx)
            spend = min(spend_fraction * ctx.donor_resources, ctx.donor_resources - donation)
        return Decision(donation=donation, punishment_spend=spend)

    if gateway is None:
        raise ValueError(f"backend {profile.backend!r} requires a gateway")
    prompt = render_donation_prompt(ctx)
    req = make_request(
        system_text,
        prompt,
        generation=ctx.generation,
        round=ctx.round,
        agent=str(profile.id),
        provider_tag=gateway.provider_tag,
        temperature=gateway.temperature,
        max_tokens=gateway.max_tokens,
    )
    raw = gateway.complete(req)
    decision = parse_decision(raw, ctx.donor_resources, ctx.punishment_enabled)
    decision.request_id = req.request_id
    return decision
