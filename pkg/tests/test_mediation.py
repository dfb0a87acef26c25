import pytest

from agrsim import (
    BROADCAST,
    Constant,
    Delivery,
    Envelope,
    Exponential,
    Kernel,
    MediationPolicy,
    MediatorBehavior,
    NotMemberError,
    RngStream,
    RoleUnknownError,
    Simulation,
    ToAgent,
    ToRole,
    TraceRecorder,
    Uniform,
    mediate,
    sample_latency,
)
from _support import RecorderBehavior


def make_net(policy=None, members=3, roles=("Peer",), seed=0):
    """A simulation with one group, `members` RecorderBehavior members joined
    under the first role, and trace records kept."""
    kernel = Kernel(seed=seed, recorder=TraceRecorder(keep_records=True))
    sim = Simulation(kernel)
    group = sim.create_group(
        MediatorBehavior(), policy or MediationPolicy(), roles
    )
    behaviors = {}
    for _ in range(members):
        agent = sim.spawn_agent(RecorderBehavior())
        sim.join(agent, group, roles[0])
        behaviors[agent] = sim.agents[agent].behavior
    sim.run_to_quiescence()  # flush activations
    return sim, group, behaviors


def trace_tags(sim):
    return [line.rstrip("\n").split(",")[4] for line in sim.kernel.recorder.records]


def test_send_requires_membership_and_emits_nothing_otherwise():
    sim, group, behaviors = make_net()
    outsider = sim.spawn_agent(RecorderBehavior())
    sim.run_to_quiescence()
    before = list(sim.kernel.recorder.records)
    with pytest.raises(NotMemberError):
        sim.send(outsider, group, BROADCAST, "hello")
    sim.run_to_quiescence()
    assert sim.kernel.recorder.records == before


def test_send_to_role_must_be_declared():
    sim, group, behaviors = make_net()
    sender = next(iter(behaviors))
    with pytest.raises(RoleUnknownError):
        sim.send(sender, group, ToRole("Oracle"), "hello")


def test_member_send_routes_one_envelope_to_environment():
    sim, group, behaviors = make_net()
    sender, target = sorted(behaviors)[:2]
    env = sim.organization.group(group).env_agent
    sim.send(sender, group, ToAgent(target), "ping")
    sim.run_to_quiescence()
    envelope_records = [
        line for line in sim.kernel.recorder.records if line.rstrip("\n").split(",")[4] == "envelope"
    ]
    assert len(envelope_records) == 1
    assert int(envelope_records[0].split(",")[3]) == env
    delivered = [p for kind, _, p in behaviors[target].events if kind == "event"]
    assert len(delivered) == 1
    assert delivered[0].payload == "ping"
    assert delivered[0].sender == sender


def test_message_addressed_to_environment_is_consumed():
    sim, group, behaviors = make_net()
    sender = sorted(behaviors)[0]
    sim.send(sender, group, ToRole("Environment"), "request")
    sim.run_to_quiescence()
    assert trace_tags(sim).count("envelope") == 1
    assert trace_tags(sim).count("deliver") == 0
    env = sim.organization.group(group).env_agent
    sim.send(sender, group, ToAgent(env), "request")
    sim.run_to_quiescence()
    assert trace_tags(sim).count("deliver") == 0


def test_broadcast_excludes_sender_and_environment():
    sim, group, behaviors = make_net(policy=MediationPolicy(Constant(5), 0.0), members=3)
    a, x, y = sorted(behaviors)
    sim.send(a, group, BROADCAST, "blast")
    send_time = sim.now
    sim.run_to_quiescence()
    assert [kind for kind, _, _ in behaviors[a].events if kind == "event"] == []
    for recipient in (x, y):
        deliveries = [e for e in behaviors[recipient].events if e[0] == "event"]
        assert len(deliveries) == 1
        assert deliveries[0][1] == send_time + 5


def test_drop_prob_one_drops_everything():
    sim, group, behaviors = make_net(policy=MediationPolicy(Constant(0), 1.0), members=4)
    sender = sorted(behaviors)[0]
    sim.send(sender, group, BROADCAST, "blast")
    sim.run_to_quiescence()
    assert trace_tags(sim).count("deliver") == 0
    assert sim.counters["dropped"] == 3
    assert sim.counters["deliveries"] == 0


def test_mediate_returns_scheduled_deliveries_in_ascending_order():
    sim, group, behaviors = make_net(policy=MediationPolicy(Constant(2), 0.0), members=4)
    sender = sorted(behaviors)[0]
    env = sim.organization.group(group).env_agent
    env_ctx = sim.agents[env].ctx
    envelope = Envelope(sender, group, BROADCAST, "m", sim.now)
    scheduled = mediate(env_ctx, envelope)
    targets = [d.target for d in scheduled]
    assert targets == sorted(behaviors)[1:]
    assert all(d.deliver_at == sim.now + 2 for d in scheduled)


def test_mediate_to_unknown_agent_counts_undeliverable():
    sim, group, behaviors = make_net()
    sender = sorted(behaviors)[0]
    sim.send(sender, group, ToAgent(999), "void")
    sim.run_to_quiescence()
    assert sim.counters["undeliverable"] == 1
    assert trace_tags(sim).count("deliver") == 0


def test_statistical_drop_fraction():
    # 10,000 broadcast recipients under drop_prob=0.5: the delivered share
    # must land within 0.5 +/- 0.02 for this fixed seed.
    sim, group, behaviors = make_net(
        policy=MediationPolicy(Constant(1), 0.5), members=10_001, seed=42
    )
    sender = sorted(behaviors)[0]
    sim.send(sender, group, BROADCAST, "blast")
    sim.run_to_quiescence()
    delivered = sim.counters["deliveries"]
    fraction = delivered / 10_000
    assert 0.48 <= fraction <= 0.52
    assert delivered + sim.counters["dropped"] == 10_000


def test_sample_latency_constant_consumes_no_randomness():
    rng = RngStream(0, 0)
    policy = MediationPolicy(Constant(7), 0.0)
    assert [sample_latency(policy, rng) for _ in range(5)] == [7] * 5
    assert rng.draws == 0


def test_sample_latency_uniform_point_and_range():
    rng = RngStream(0, 0)
    assert sample_latency(MediationPolicy(Uniform(3, 3)), rng) == 3
    policy = MediationPolicy(Uniform(10, 20))
    samples = [sample_latency(policy, rng) for _ in range(2000)]
    assert set(samples) == set(range(10, 21))


def test_sample_latency_exponential_mean():
    rng = RngStream(7, 7)
    policy = MediationPolicy(Exponential(10.0))
    n = 100_000
    samples = [sample_latency(policy, rng) for _ in range(n)]
    assert min(samples) >= 0
    assert 9.0 <= sum(samples) / n <= 11.0


def test_latency_models_validate():
    with pytest.raises(ValueError):
        Constant(-1)
    with pytest.raises(ValueError):
        Uniform(5, 4)
    with pytest.raises(ValueError):
        Exponential(0.0)
    with pytest.raises(ValueError):
        MediationPolicy(Constant(0), 1.5)


def test_delivery_to_agent_that_left_is_discarded():
    sim, group, behaviors = make_net(policy=MediationPolicy(Constant(10), 0.0))
    sender, target = sorted(behaviors)[:2]
    sim.send(sender, group, ToAgent(target), "late")
    sim.kernel.run_until(sim.now)  # mediate now; the delivery is in flight
    sim.leave(target, group, "Peer")
    sim.run_to_quiescence()
    assert sim.counters["stale_deliveries"] == 1
    assert [e for e in behaviors[target].events if e[0] == "event"] == []


def test_delivery_to_despawned_agent_is_discarded():
    sim, group, behaviors = make_net(policy=MediationPolicy(Constant(10), 0.0))
    sender, target = sorted(behaviors)[:2]
    sim.send(sender, group, ToAgent(target), "late")
    sim.kernel.run_until(sim.now)
    sim.despawn_agent(target)
    sim.run_to_quiescence()
    assert sim.counters["stale_deliveries"] == 1


def test_lossless_constant_law_over_full_run():
    # With drop 0 and Constant(d), every delivery lands exactly d after its
    # send; checked over the complete delivery log of a chatty run.
    d = 17
    sim, group, behaviors = make_net(policy=MediationPolicy(Constant(d), 0.0), members=5)
    sim.delivery_log = []
    members = sorted(behaviors)
    for i, sender in enumerate(members):
        sim.kernel.run_until(sim.now + i * 3)
        sim.send(sender, group, BROADCAST, f"m{i}")
    sim.run_to_quiescence()
    assert len(sim.delivery_log) == len(members) * (len(members) - 1)
    for send_time, deliver_time, _target in sim.delivery_log:
        assert deliver_time == send_time + d


def test_recipient_set_matches_discovery():
    sim, group, behaviors = make_net(members=6)
    members = sorted(behaviors)
    sender = members[2]
    env = sim.organization.group(group).env_agent
    env_ctx = sim.agents[env].ctx
    role_set = [
        d.target
        for d in mediate(env_ctx, Envelope(sender, group, ToRole("Peer"), "x", sim.now))
    ]
    assert role_set == [a for a in sim.discover(sender, group, "Peer")]
    bcast_set = [
        d.target
        for d in mediate(env_ctx, Envelope(sender, group, BROADCAST, "x", sim.now))
    ]
    assert bcast_set == [a for a in sim.discover(sender, group) if a != env]


def test_every_delivery_is_preceded_by_an_envelope():
    sim, group, behaviors = make_net(policy=MediationPolicy(Uniform(1, 40), 0.0), members=4)
    members = sorted(behaviors)
    for sender in members:
        sim.send(sender, group, BROADCAST, "m")
    sim.run_to_quiescence()
    seen_envelopes = 0
    for line in sim.kernel.recorder.records:
        tag = line.rstrip("\n").split(",")[4]
        if tag == "envelope":
            seen_envelopes += 1
        elif tag == "deliver":
            assert seen_envelopes > 0
    assert seen_envelopes == len(members)
