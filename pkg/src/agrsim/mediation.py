"""Mediated messaging: agents never deliver to each other directly.

Every send becomes an envelope event addressed to the group's environment
agent. The environment applies the group's mediation policy - a per-recipient
drop probability and a latency model - and schedules the resulting delivery
events. All randomness comes from the environment agent's own stream, so a
group's network behavior replays exactly under the same seed.
"""

import math
from dataclasses import dataclass
from typing import Any, NamedTuple, Optional, Union

from .organization import AgentBehavior, AgentId, GroupId, RoleId
from .rng import RngStream


@dataclass(frozen=True, slots=True)
class ToAgent:
    agent: AgentId


@dataclass(frozen=True, slots=True)
class ToRole:
    role: RoleId


@dataclass(frozen=True, slots=True)
class Broadcast:
    pass


BROADCAST = Broadcast()

Address = Union[ToAgent, ToRole, Broadcast]


@dataclass(frozen=True, slots=True)
class Constant:
    """Fixed latency; consumes no randomness."""

    ticks: int

    def __post_init__(self):
        if self.ticks < 0:
            raise ValueError("latency must be >= 0 ticks")


@dataclass(frozen=True, slots=True)
class Uniform:
    """Integer-uniform latency on [lo, hi] ticks, inclusive."""

    lo: int
    hi: int

    def __post_init__(self):
        if not 0 <= self.lo <= self.hi:
            raise ValueError(f"need 0 <= lo <= hi, got [{self.lo}, {self.hi}]")


@dataclass(frozen=True, slots=True)
class Exponential:
    """Memoryless latency with the given mean in ticks."""

    mean: float

    def __post_init__(self):
        if not self.mean > 0:
            raise ValueError("mean must be > 0")


LatencyModel = Union[Constant, Uniform, Exponential]


@dataclass(frozen=True, slots=True)
class MediationPolicy:
    """How a group's environment treats traffic. Seedless by design: all
    draws come from the stream of whichever environment agent applies it."""

    latency: LatencyModel = Constant(0)
    drop_prob: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError(f"drop_prob must be in [0, 1], got {self.drop_prob}")


@dataclass(frozen=True, slots=True)
class Envelope:
    """A message en route to its group's environment agent."""

    sender: AgentId
    group: GroupId
    address: Address
    payload: Any
    send_time: int

    TAG = "envelope"


@dataclass(frozen=True, slots=True)
class Delivery:
    """A message the environment decided to hand to one recipient."""

    sender: AgentId
    group: GroupId
    payload: Any
    send_time: int

    TAG = "deliver"


class ScheduledDelivery(NamedTuple):
    target: AgentId
    deliver_at: int
    event_id: int


def sample_latency(policy: MediationPolicy, rng: RngStream) -> int:
    """One latency draw in ticks under the policy's model.

    Constant(d) returns d without consuming randomness; Uniform consumes
    draws until its rejection sampler accepts; Exponential consumes exactly
    one draw and rounds round(-mean * ln(u)) with u in (0, 1].
    """
    lat = policy.latency
    if type(lat) is Constant:
        return lat.ticks
    if type(lat) is Uniform:
        return rng.randint(lat.lo, lat.hi)
    if type(lat) is Exponential:
        return int(round(-lat.mean * math.log(rng.random_positive())))
    raise TypeError(f"unknown latency model {lat!r}")


def mediate(ctx, envelope: Envelope, rng: Optional[RngStream] = None) -> list[ScheduledDelivery]:
    """Resolve an envelope into scheduled deliveries; runs inside the
    environment agent's handler.

    Recipients are resolved against membership at mediation time, in
    ascending agent id order, the mediating environment itself always
    excluded (a message addressed to the environment is consumed on
    arrival). Each recipient independently draws a drop decision first and,
    only if it survives, a latency; that order is part of the replication
    contract.
    """
    sim = ctx.sim
    group = sim.organization.group(envelope.group)
    policy: MediationPolicy = group.policy
    if rng is None:
        rng = ctx.rng
    address = envelope.address

    if type(address) is ToAgent:
        target = address.agent
        if target == group.env_agent:
            recipients: list[AgentId] = []
        elif target in group.members:
            recipients = [target]
        else:
            sim.counters["undeliverable"] += 1
            recipients = []
    elif type(address) is ToRole:
        recipients = [
            a
            for a in sim.organization.discover(group.env_agent, envelope.group, address.role)
            if a != envelope.sender
        ]
    elif type(address) is Broadcast:
        recipients = [
            a
            for a in sim.organization.discover(group.env_agent, envelope.group, None)
            if a != envelope.sender
        ]
    else:
        raise TypeError(f"unknown address {address!r}")

    scheduled: list[ScheduledDelivery] = []
    delivery = None
    for target in recipients:
        if rng.random() < policy.drop_prob:
            sim.counters["dropped"] += 1
            continue
        delay = sample_latency(policy, rng)
        if delivery is None:
            delivery = Delivery(
                envelope.sender, envelope.group, envelope.payload, envelope.send_time
            )
        event_id = sim._schedule_event(target, delivery, delay)
        scheduled.append(ScheduledDelivery(target, sim.now + delay, event_id))
    return scheduled


class MediatorBehavior(AgentBehavior):
    """Default environment agent: applies the group policy to every envelope.

    Subclass and extend on_event to build environments with richer dynamics
    (admission control, service endpoints, payload-dependent routing).
    """

    def on_event(self, ctx, payload: Any) -> None:
        if isinstance(payload, Envelope):
            mediate(ctx, payload)
