"""Agents, groups, and roles.

A group is a context of interaction: a declared role vocabulary plus a
membership relation of (agent, role) pairs. Roles are local to their group
and may be played by many agents; one agent may play many roles in many
groups. Every group is created together with a dedicated environment agent
that holds the reserved role "Environment" and mediates all communication
inside the group; that membership can never be removed while the group
exists.
"""

from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

AgentId = int
GroupId = int
RoleId = str

ENVIRONMENT_ROLE: RoleId = "Environment"


class SimulationError(Exception):
    """Base class for model-level errors raised by the runtime."""


class ConfigurationError(SimulationError):
    pass


class RoleUnknownError(SimulationError):
    pass


class NotMemberError(SimulationError):
    pass


class ForbiddenError(SimulationError):
    pass


class UnknownAgentError(SimulationError):
    pass


class UnknownGroupError(SimulationError):
    pass


class AgentBehavior:
    """Contract for agent logic.

    Subclasses override on_activate (runs once, at spawn time) and on_event
    (runs for every event addressed to the agent: mediated deliveries and
    self-scheduled payloads alike). Handlers must be deterministic functions
    of their own state, the payload, and the agent's own random stream.
    """

    def on_activate(self, ctx) -> None:
        pass

    def on_event(self, ctx, payload: Any) -> None:
        pass


def validate_role_vocabulary(roles: Iterable[RoleId]) -> list[RoleId]:
    """Check a declared role list: non-empty strings, no duplicates, and no
    claim on the reserved "Environment" name. Returns the list unchanged."""
    role_list = list(roles)
    if not role_list:
        raise ConfigurationError("a group needs at least one declared role")
    seen: set[RoleId] = set()
    for r in role_list:
        if not isinstance(r, str) or not r:
            raise ConfigurationError(f"role names must be non-empty strings, got {r!r}")
        if r == ENVIRONMENT_ROLE:
            raise ConfigurationError(
                f"{ENVIRONMENT_ROLE!r} is reserved and granted automatically"
            )
        if r in seen:
            raise ConfigurationError(f"duplicate role name {r!r}")
        seen.add(r)
    return role_list


@dataclass
class Group:
    """One interaction context and its membership relation."""

    group_id: GroupId
    roles: frozenset[RoleId]
    env_agent: AgentId
    policy: Any
    # agent id -> roles that agent plays here
    members: dict[AgentId, set[RoleId]] = field(default_factory=dict)


class Organization:
    """The membership registry shared by all groups of one run."""

    def __init__(self):
        self._groups: dict[GroupId, Group] = {}
        self._next_group_id: GroupId = 1

    def group(self, group_id: GroupId) -> Group:
        try:
            return self._groups[group_id]
        except KeyError:
            raise UnknownGroupError(f"no group with id {group_id}") from None

    def groups(self) -> Iterable[Group]:
        return self._groups.values()

    def create_group(self, env_agent: AgentId, roles: Iterable[RoleId], policy: Any) -> Group:
        """Register a group whose environment agent has already been spawned.

        The declared vocabulary is fixed at creation; "Environment" is
        reserved, added implicitly, and granted to the environment agent.
        """
        role_list = validate_role_vocabulary(roles)
        group_id = self._next_group_id
        self._next_group_id += 1
        group = Group(
            group_id=group_id,
            roles=frozenset(role_list) | {ENVIRONMENT_ROLE},
            env_agent=env_agent,
            policy=policy,
            members={env_agent: {ENVIRONMENT_ROLE}},
        )
        self._groups[group_id] = group
        return group

    def join(self, agent: AgentId, group_id: GroupId, role: RoleId) -> None:
        """Add (agent, group, role); idempotent when the triple exists.

        Only the group's own environment agent may hold "Environment", which
        keeps the one-mediator-per-group invariant.
        """
        group = self.group(group_id)
        if role not in group.roles:
            raise RoleUnknownError(
                f"role {role!r} is not declared in group {group_id}"
            )
        if role == ENVIRONMENT_ROLE and agent != group.env_agent:
            raise ForbiddenError(
                f"agent {agent} cannot play {ENVIRONMENT_ROLE!r} in group {group_id}"
            )
        group.members.setdefault(agent, set()).add(role)

    def leave(self, agent: AgentId, group_id: GroupId, role: RoleId) -> None:
        """Remove (agent, group, role) if present; no-op otherwise."""
        group = self.group(group_id)
        roles = group.members.get(agent)
        if roles is None or role not in roles:
            return
        if role == ENVIRONMENT_ROLE and agent == group.env_agent:
            raise ForbiddenError(
                f"group {group_id} cannot lose its environment agent"
            )
        roles.discard(role)
        if not roles:
            del group.members[agent]

    def discover(
        self, caller: AgentId, group_id: GroupId, role: Optional[RoleId] = None
    ) -> list[AgentId]:
        """Co-members of the caller, ascending by id, excluding the caller.

        With a role filter, only agents playing that role; an undeclared
        filter simply matches nothing. Discovery is a privilege of
        membership.
        """
        group = self.group(group_id)
        if caller not in group.members:
            raise NotMemberError(
                f"agent {caller} is not a member of group {group_id}"
            )
        if role is None:
            found = [a for a in group.members if a != caller]
        else:
            found = [
                a for a, rs in group.members.items() if a != caller and role in rs
            ]
        found.sort()
        return found

    def roles_of(self, agent: AgentId, group_id: GroupId) -> set[RoleId]:
        """Roles the agent plays in the group; empty when not a member."""
        group = self._groups.get(group_id)
        if group is None:
            return set()
        return set(group.members.get(agent, ()))

    def is_member(self, agent: AgentId, group_id: GroupId) -> bool:
        group = self._groups.get(group_id)
        return group is not None and agent in group.members

    def remove_agent(self, agent: AgentId) -> None:
        """Erase all of an agent's memberships, e.g. when it despawns."""
        for group in self._groups.values():
            if group.env_agent == agent:
                raise ForbiddenError(
                    f"agent {agent} is the environment of group {group.group_id}"
                )
        for group in self._groups.values():
            group.members.pop(agent, None)
