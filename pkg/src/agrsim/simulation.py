"""The runtime that ties the kernel to agents, groups, and mediation.

A Simulation owns one kernel and dispatches its events to agent behaviors.
All model state mutates inside event handlers, single-context, run to
completion. Messages flow only through environment agents: the public agent
API can self-schedule and send, but cannot place an event on another agent's
timeline.
"""

from collections import Counter
from dataclasses import dataclass
from typing import Any, Iterable, Optional

from .kernel import Kernel, ScheduledEvent
from .mediation import Address, Delivery, Envelope, ToRole
from .organization import (
    AgentBehavior,
    AgentId,
    GroupId,
    NotMemberError,
    Organization,
    RoleId,
    RoleUnknownError,
    UnknownAgentError,
    validate_role_vocabulary,
)
from .rng import RngStream


@dataclass(frozen=True, slots=True)
class Activate:
    """Scheduled once per agent at spawn time; triggers on_activate."""

    TAG = "activate"


_ACTIVATE = Activate()


class AgentContext:
    """An agent's handle on the world, passed into every handler call."""

    __slots__ = ("sim", "agent_id", "_rng")

    def __init__(self, sim: "Simulation", agent_id: AgentId):
        self.sim = sim
        self.agent_id = agent_id
        self._rng: Optional[RngStream] = None

    @property
    def now(self) -> int:
        return self.sim.kernel.now

    @property
    def rng(self) -> RngStream:
        """This agent's private stream; derived once, keyed by (seed, id)."""
        if self._rng is None:
            self._rng = self.sim.kernel.derive_rng(self.agent_id)
        return self._rng

    @property
    def globals(self) -> dict[str, Any]:
        return self.sim.kernel.global_vars

    def schedule(self, payload: Any, delay: int = 0) -> int:
        """Self-schedule a future event; returns its id for cancel()."""
        return self.sim._schedule_event(self.agent_id, payload, delay)

    def cancel(self, event_id: int) -> bool:
        return self.sim.kernel.cancel(event_id)

    def send(self, group: GroupId, address: Address, payload: Any) -> int:
        return self.sim.send(self.agent_id, group, address, payload)

    def join(self, group: GroupId, role: RoleId) -> None:
        self.sim.join(self.agent_id, group, role)

    def leave(self, group: GroupId, role: RoleId) -> None:
        self.sim.leave(self.agent_id, group, role)

    def discover(self, group: GroupId, role: Optional[RoleId] = None) -> list[AgentId]:
        return self.sim.discover(self.agent_id, group, role)

    def roles_of(self, group: GroupId) -> set[RoleId]:
        return self.sim.roles_of(self.agent_id, group)

    def spawn(self, behavior: AgentBehavior) -> AgentId:
        return self.sim.spawn_agent(behavior)

    def group_policy(self, group: GroupId):
        return self.sim.organization.group(group).policy


@dataclass(slots=True)
class _AgentRecord:
    behavior: AgentBehavior
    ctx: AgentContext


class Simulation:
    """Composition root: kernel + organization + mediation wiring."""

    def __init__(self, kernel: Kernel):
        self.kernel = kernel
        kernel.dispatcher = self._dispatch
        self.organization = Organization()
        self.agents: dict[AgentId, _AgentRecord] = {}
        self._next_agent_id: AgentId = 1  # ids ascend from 1; 0 is reserved
        self.counters: Counter[str] = Counter()
        # When a list, every successful delivery appends
        # (send_time, deliver_time, target); used in tests that assert
        # latency laws over entire runs.
        self.delivery_log: Optional[list[tuple[int, int, AgentId]]] = None

    @property
    def now(self) -> int:
        return self.kernel.now

    # -- lifecycle ---------------------------------------------------------

    def spawn_agent(self, behavior: AgentBehavior) -> AgentId:
        """Register a behavior under a fresh id; on_activate fires at now."""
        agent_id = self._next_agent_id
        self._next_agent_id += 1
        self.agents[agent_id] = _AgentRecord(behavior, AgentContext(self, agent_id))
        self._schedule_event(agent_id, _ACTIVATE, 0)
        return agent_id

    def despawn_agent(self, agent_id: AgentId) -> bool:
        """Remove an agent and its memberships; its pending deliveries will
        be discarded (and counted) when they surface. Environment agents
        cannot despawn while their group exists."""
        if agent_id not in self.agents:
            return False
        self.organization.remove_agent(agent_id)
        del self.agents[agent_id]
        return True

    def create_group(
        self, env_behavior: AgentBehavior, policy: Any, roles: Iterable[RoleId]
    ) -> GroupId:
        """Create a group and its environment agent in one step.

        The role vocabulary is validated before anything is spawned, so a
        bad declaration has no side effects.
        """
        role_list = validate_role_vocabulary(roles)
        env_agent = self.spawn_agent(env_behavior)
        group = self.organization.create_group(env_agent, role_list, policy)
        return group.group_id

    # -- organization ops ----------------------------------------------------

    def join(self, agent: AgentId, group: GroupId, role: RoleId) -> None:
        if agent not in self.agents:
            raise UnknownAgentError(f"no agent with id {agent}")
        self.organization.join(agent, group, role)

    def leave(self, agent: AgentId, group: GroupId, role: RoleId) -> None:
        self.organization.leave(agent, group, role)

    def discover(
        self, caller: AgentId, group: GroupId, role: Optional[RoleId] = None
    ) -> list[AgentId]:
        return self.organization.discover(caller, group, role)

    def roles_of(self, agent: AgentId, group: GroupId) -> set[RoleId]:
        return self.organization.roles_of(agent, group)

    def is_member(self, agent: AgentId, group: GroupId) -> bool:
        return self.organization.is_member(agent, group)

    # -- messaging -----------------------------------------------------------

    def send(self, sender: AgentId, group: GroupId, address: Address, payload: Any) -> int:
        """Post a message into a group; it reaches the environment agent at
        the current tick and is delivered (or not) under the group policy."""
        grp = self.organization.group(group)
        if sender not in grp.members:
            raise NotMemberError(f"agent {sender} is not a member of group {group}")
        if type(address) is ToRole and address.role not in grp.roles:
            raise RoleUnknownError(
                f"role {address.role!r} is not declared in group {group}"
            )
        envelope = Envelope(sender, group, address, payload, self.kernel.now)
        self.counters["envelopes_sent"] += 1
        return self._schedule_event(grp.env_agent, envelope, 0)

    # -- execution -----------------------------------------------------------

    def run_until(self, stop: int) -> int:
        return self.kernel.run_until(stop)

    def run_to_quiescence(self) -> int:
        return self.kernel.run_to_quiescence()

    def _schedule_event(self, target: AgentId, payload: Any, delay: int) -> int:
        return self.kernel.schedule(target, payload, delay)

    def _dispatch(self, event: ScheduledEvent) -> None:
        payload = event.payload
        record = self.agents.get(event.target)
        if record is None:
            key = "stale_deliveries" if type(payload) is Delivery else "dead_letters"
            self.counters[key] += 1
            return
        if type(payload) is Delivery:
            # Membership is re-checked at delivery time: recipients that left
            # the group while the message was in flight never see it.
            if not self.organization.is_member(event.target, payload.group):
                self.counters["stale_deliveries"] += 1
                return
            self.counters["deliveries"] += 1
            if self.delivery_log is not None:
                self.delivery_log.append((payload.send_time, event.fire_time, event.target))
            record.behavior.on_event(record.ctx, payload)
        elif type(payload) is Activate:
            record.behavior.on_activate(record.ctx)
        else:
            record.behavior.on_event(record.ctx, payload)
