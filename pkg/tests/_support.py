"""Shared test helpers: scripted behaviors, random generators, oracles.

Oracles here are deliberately independent of the implementation paths they
check: the fork-choice oracle enumerates root-to-leaf paths, the membership
mirror re-derives discovery from a plain set of triples, and the tree
checker walks raw dictionaries.
"""

import random

from agrsim import (
    AgentBehavior,
    BlockTree,
    Constant,
    ExperimentConfig,
    Exponential,
    Uniform,
    make_block,
    make_transaction,
)


class RecorderBehavior(AgentBehavior):
    """Collects every handler invocation as (kind, now, payload)."""

    def __init__(self):
        self.events = []

    def on_activate(self, ctx):
        self.events.append(("activate", ctx.now, None))

    def on_event(self, ctx, payload):
        self.events.append(("event", ctx.now, payload))


class ScriptedBehavior(AgentBehavior):
    """Delegates handlers to plain callables, for one-off scenarios."""

    def __init__(self, on_activate=None, on_event=None):
        self._on_activate = on_activate
        self._on_event = on_event

    def on_activate(self, ctx):
        if self._on_activate:
            self._on_activate(ctx)

    def on_event(self, ctx, payload):
        if self._on_event:
            self._on_event(ctx, payload)


def random_latency(rnd: random.Random):
    kind = rnd.randrange(3)
    if kind == 0:
        return Constant(rnd.randrange(0, 2000))
    if kind == 1:
        lo = rnd.randrange(0, 1000)
        return Uniform(lo, lo + rnd.randrange(0, 2000))
    return Exponential(rnd.uniform(50.0, 1500.0))


def random_config(rnd: random.Random, **overrides) -> ExperimentConfig:
    """A small randomized experiment; kwargs pin individual fields."""
    params = dict(
        seed=rnd.getrandbits(64),
        stop_time=rnd.randrange(20_000, 120_000),
        num_clients=rnd.randrange(0, 6),
        num_proposers=rnd.randrange(1, 5),
        tx_rate=rnd.uniform(0.0, 2e-4),
        block_rate=rnd.uniform(2e-5, 5e-4),
        latency=random_latency(rnd),
        drop_prob=rnd.uniform(0.0, 0.3),
        max_txs_per_block=rnd.randrange(1, 50),
    )
    params.update(overrides)
    return ExperimentConfig(**params)


def check_tree_invariants(tree: BlockTree) -> None:
    """Assert the structural laws of a block tree from raw state."""
    genesis = tree.get(tree.genesis_id)
    assert genesis.height == 0 and genesis.parent is None and genesis.txs == ()
    for block_id, block in tree.blocks.items():
        assert block.block_id == block_id
        if block_id == tree.genesis_id:
            continue
        assert block.parent in tree.blocks, "parent missing"
        parent = tree.get(block.parent)
        assert block.height == parent.height + 1, "height law broken"
        assert block_id in tree.children[block.parent], "children index broken"
        # Acyclic and rooted: the parent walk must reach genesis.
        seen = set()
        cur = block
        while cur.parent is not None:
            assert cur.block_id not in seen, "cycle detected"
            seen.add(cur.block_id)
            cur = tree.get(cur.parent)
        assert cur.block_id == tree.genesis_id
    # Children index contains no strays.
    for parent_id, kids in tree.children.items():
        assert parent_id in tree.blocks
        for kid in kids:
            assert tree.get(kid).parent == parent_id
    # Canonical chain heights are exactly 0..h.
    chain = tree.canonical_chain()
    assert [b.height for b in chain] == list(range(len(chain)))


def brute_force_path(tree: BlockTree) -> list[bytes]:
    """Fork-choice oracle: enumerate every root-to-leaf path, pick the
    longest, break ties by smallest tip id. Ignores the tree's own cache."""
    paths = []
    stack = [(tree.genesis_id, [tree.genesis_id])]
    while stack:
        node, path = stack.pop()
        kids = tree.children[node]
        if not kids:
            paths.append(path)
            continue
        for kid in kids:
            stack.append((kid, path + [kid]))
    # max() with inverted tip bytes realizes "longest, then smallest id".
    return max(paths, key=lambda p: (len(p), [255 - b for b in p[-1]]))


def brute_force_tip(tree: BlockTree) -> bytes:
    return brute_force_path(tree)[-1]


def build_random_tree(rnd: random.Random, max_blocks: int, with_txs: bool = False) -> BlockTree:
    """Grow a tree by appending valid blocks under random parents."""
    tree = BlockTree()
    ids = [tree.genesis_id]
    tx_counter = 0
    for i in range(rnd.randrange(0, max_blocks)):
        parent_id = rnd.choice(ids)
        parent = tree.get(parent_id)
        txs = []
        if with_txs and rnd.random() < 0.5:
            for _ in range(rnd.randrange(1, 4)):
                txs.append(
                    make_transaction(1, i, 100, tx_counter).tx_id
                )
                tx_counter += 1
        block = make_block(parent_id, parent.height + 1, rnd.randrange(1, 6), txs, i + 1)
        tree.append(block)
        ids.append(block.block_id)
    return tree
