"""Generic blockchain model: a block-tree datatype plus network behaviors.

The datatype is deliberately small - validate, append, and a canonical read
through a fork-choice rule - so that concrete chain designs can be expressed
by swapping the rule and the proposal schedule. The default rule is longest
chain with ties broken by lexicographically smallest block id.

Identifiers are content digests over a canonical byte encoding (fixed field
order, big-endian 64-bit integers, length-prefixed transaction lists; see
docs/encoding.md), which makes block and transaction ids reproducible
bit-for-bit across runs and across independent implementations.

Consensus work is abstracted: each proposer draws memoryless intervals at
its block rate, which is the minimal stochastic model that produces
realistic fork behavior once network latency is in play. There is no proof
of work, no signatures, no fees.
"""

import hashlib
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Iterator, Optional, TYPE_CHECKING

from .mediation import Delivery, ToRole
from .organization import AgentBehavior, AgentId
from .rng import RngStream

if TYPE_CHECKING:
    from .simulation import AgentContext

NODE_ROLE = "Node"
CLIENT_ROLE = "Client"

# Encoding marker standing in for "no parent"; only genesis uses it.
GENESIS_PARENT = b"\x00" * 32


def _u64(value: int) -> bytes:
    return value.to_bytes(8, "big")


@dataclass(frozen=True, slots=True)
class Transaction:
    tx_id: bytes
    submitter: AgentId
    created_at: int
    payload_size: int
    counter: int


@dataclass(frozen=True, slots=True)
class Block:
    block_id: bytes
    parent: Optional[bytes]
    height: int
    proposer: AgentId
    txs: tuple[bytes, ...]
    created_at: int


def encode_transaction(submitter: int, created_at: int, payload_size: int, counter: int) -> bytes:
    """Canonical 32-byte encoding hashed into a transaction id."""
    return _u64(submitter) + _u64(created_at) + _u64(payload_size) + _u64(counter)


def make_transaction(submitter: int, created_at: int, payload_size: int, counter: int) -> Transaction:
    """Build a transaction whose id is the SHA-256 of its canonical encoding.

    `counter` is the submitter's own running transaction count; it keeps ids
    unique when one client submits several transactions in the same tick.
    """
    tx_id = hashlib.sha256(
        encode_transaction(submitter, created_at, payload_size, counter)
    ).digest()
    return Transaction(tx_id, submitter, created_at, payload_size, counter)


def encode_block(
    parent: Optional[bytes], height: int, proposer: int, txs: Iterable[bytes], created_at: int
) -> bytes:
    """Canonical block encoding hashed into a block id."""
    tx_list = list(txs)
    parts = [parent if parent is not None else GENESIS_PARENT]
    parts.append(_u64(height))
    parts.append(_u64(proposer))
    parts.append(_u64(len(tx_list)))
    parts.extend(tx_list)
    parts.append(_u64(created_at))
    return b"".join(parts)


def make_block(
    parent: Optional[bytes], height: int, proposer: int, txs: Iterable[bytes], created_at: int
) -> Block:
    tx_tuple = tuple(txs)
    block_id = hashlib.sha256(
        encode_block(parent, height, proposer, tx_tuple, created_at)
    ).digest()
    return Block(block_id, parent, height, proposer, tx_tuple, created_at)


_GENESIS = make_block(None, 0, 0, (), 0)


def genesis() -> Block:
    """The unique genesis block: height 0, no parent, no transactions,
    proposer 0 (the reserved non-agent id), created at tick 0."""
    return _GENESIS


class BlockError(Enum):
    MISSING_PARENT = "MissingParent"
    BAD_HEIGHT = "BadHeight"
    BAD_DIGEST = "BadDigest"
    DUPLICATE = "Duplicate"
    TX_REPLAY = "TxReplay"


class InvalidBlockError(Exception):
    def __init__(self, kind: BlockError, block: Block):
        super().__init__(f"{kind.value}: block {block.block_id.hex()[:16]}")
        self.kind = kind
        self.block = block


class BlockTree:
    """Self-contained rooted tree of validated blocks.

    Every non-genesis block's parent is present, heights step by one along
    every edge, and block ids recompute from content. The current best tip
    under the longest-chain rule is maintained incrementally; because it is
    the maximum under a total order on (height, id), it does not depend on
    the order blocks were appended in.
    """

    def __init__(self):
        g = genesis()
        self.genesis_id = g.block_id
        self.blocks: dict[bytes, Block] = {g.block_id: g}
        self.children: dict[bytes, set[bytes]] = {g.block_id: set()}
        self._tip = g.block_id
        # tx id -> ids of blocks that include it, for replay checks.
        self._tx_blocks: dict[bytes, list[bytes]] = {}

    def __contains__(self, block_id: bytes) -> bool:
        return block_id in self.blocks

    def __len__(self) -> int:
        return len(self.blocks)

    def get(self, block_id: bytes) -> Block:
        return self.blocks[block_id]

    def validate(self, block: Block) -> Optional[BlockError]:
        """None when the block may be appended, else the first violated rule.

        Checks run in a fixed order (parent, height, digest, duplication,
        transaction replay) so the reported kind is deterministic.
        """
        if block.parent is None or block.parent not in self.blocks:
            return BlockError.MISSING_PARENT
        parent = self.blocks[block.parent]
        if block.height != parent.height + 1:
            return BlockError.BAD_HEIGHT
        expected = hashlib.sha256(
            encode_block(block.parent, block.height, block.proposer, block.txs, block.created_at)
        ).digest()
        if block.block_id != expected:
            return BlockError.BAD_DIGEST
        if block.block_id in self.blocks:
            return BlockError.DUPLICATE
        if len(set(block.txs)) != len(block.txs):
            return BlockError.TX_REPLAY
        for tx_id in block.txs:
            if self.tx_on_chain(tx_id, block.parent):
                return BlockError.TX_REPLAY
        return None

    def append(self, block: Block) -> None:
        """Insert a block; raises InvalidBlockError when validate() rejects."""
        err = self.validate(block)
        if err is not None:
            raise InvalidBlockError(err, block)
        self.blocks[block.block_id] = block
        self.children[block.parent].add(block.block_id)
        self.children[block.block_id] = set()
        for tx_id in block.txs:
            self._tx_blocks.setdefault(tx_id, []).append(block.block_id)
        tip = self.blocks[self._tip]
        if block.height > tip.height or (
            block.height == tip.height and block.block_id < tip.block_id
        ):
            self._tip = block.block_id

    def fork_choice(self) -> bytes:
        """Id of the canonical tip: maximum height, smallest id on a tie."""
        return self._tip

    def canonical_chain(self, tip: Optional[bytes] = None) -> list[Block]:
        """Blocks from genesis to the (fork-choice) tip, heights 0..h."""
        block = self.blocks[tip if tip is not None else self._tip]
        chain = [block]
        while block.parent is not None:
            block = self.blocks[block.parent]
            chain.append(block)
        chain.reverse()
        return chain

    def is_ancestor(self, ancestor_id: bytes, descendant_id: bytes) -> bool:
        """True iff ancestor lies on the path from genesis to descendant
        (a block is its own ancestor)."""
        target_height = self.blocks[ancestor_id].height
        block = self.blocks[descendant_id]
        while block.height > target_height:
            block = self.blocks[block.parent]
        return block.block_id == ancestor_id

    def tx_on_chain(self, tx_id: bytes, tip: Optional[bytes] = None) -> bool:
        """True iff some block on the path genesis..tip includes tx_id."""
        holders = self._tx_blocks.get(tx_id)
        if not holders:
            return False
        if tip is None:
            tip = self._tip
        return any(self.is_ancestor(h, tip) for h in holders)


def longest_chain(tree: BlockTree) -> bytes:
    return tree.fork_choice()


# Fork-choice rules addressable from experiment configs; models may register
# additional entries before loading a config that names them.
FORK_CHOICE_RULES: dict[str, Callable[[BlockTree], bytes]] = {
    "longest-chain": longest_chain,
}


class Mempool:
    """Pending transactions in insertion order, unique by tx id."""

    def __init__(self):
        self._pending: dict[bytes, Transaction] = {}

    def __len__(self) -> int:
        return len(self._pending)

    def __contains__(self, tx_id: bytes) -> bool:
        return tx_id in self._pending

    def __iter__(self) -> Iterator[bytes]:
        return iter(self._pending)

    def add(self, tx: Transaction) -> bool:
        if tx.tx_id in self._pending:
            return False
        self._pending[tx.tx_id] = tx
        return True

    def get(self, tx_id: bytes) -> Transaction:
        return self._pending[tx_id]

    def remove_many(self, tx_ids: Iterable[bytes]) -> None:
        for tx_id in tx_ids:
            self._pending.pop(tx_id, None)


class NodeRole(Enum):
    CLIENT = "client"
    PROPOSER = "proposer"


@dataclass
class NodeState:
    """Per-agent chain state; owned by its agent, touched only in handlers."""

    agent_id: AgentId
    tree: BlockTree
    mempool: Mempool
    block_rate: float
    role: NodeRole
    fork_rule: Callable[[BlockTree], bytes] = longest_chain
    relayed: set[bytes] = field(default_factory=set)
    orphans: dict[Optional[bytes], list[Block]] = field(default_factory=dict)
    orphan_ids: set[bytes] = field(default_factory=set)

    def __post_init__(self):
        if self.role is NodeRole.PROPOSER and not self.block_rate > 0:
            raise ValueError("proposers need block_rate > 0")


def next_block_delay(block_rate: float, rng: RngStream) -> int:
    """Ticks until the next proposal: round(-ln(u)/rate) with u in (0, 1].

    Memoryless, so proposal times form a Poisson process at block_rate.
    """
    if not block_rate > 0:
        raise ValueError("block_rate must be > 0")
    return int(round(rng.expovariate(1.0 / block_rate)))


def propose(
    node: NodeState, now: int, max_txs: int, rng: Optional[RngStream] = None
) -> Block:
    """Build, locally append, and return the node's next block.

    The block extends the node's fork-choice tip with up to max_txs pending
    transactions, oldest first, skipping any already on the canonical chain.
    Selected transactions leave the pool, mirroring receipt-side pruning.
    Empty blocks are legal. `rng` is unused by this selection rule; it is
    part of the signature so randomized selection rules can slot in.
    """
    tip_id = node.fork_rule(node.tree)
    tip = node.tree.get(tip_id)
    selected: list[bytes] = []
    if max_txs > 0:
        for tx_id in node.mempool:
            if node.tree.tx_on_chain(tx_id, tip_id):
                continue
            selected.append(tx_id)
            if len(selected) == max_txs:
                break
    block = make_block(tip_id, tip.height + 1, node.agent_id, selected, now)
    node.tree.append(block)
    node.mempool.remove_many(selected)
    node.relayed.add(block.block_id)
    return block


def submit_tx(node: NodeState, tx: Transaction) -> bool:
    """Admit a transaction to the pool unless it is already pending or
    already on the canonical chain; returns False for those duplicates."""
    if tx.tx_id in node.mempool:
        return False
    if node.tree.tx_on_chain(tx.tx_id, node.fork_rule(node.tree)):
        return False
    node.mempool.add(tx)
    return True


@dataclass(slots=True)
class BlockReceipt:
    """Everything on_block_received decided, for the caller to act on."""

    appended: list[Block] = field(default_factory=list)
    relay: list[Block] = field(default_factory=list)
    discarded: list[tuple[Block, BlockError]] = field(default_factory=list)
    orphaned: list[Block] = field(default_factory=list)


def on_block_received(node: NodeState, block: Block) -> BlockReceipt:
    """Fold a received block into the node's tree.

    Valid blocks are appended, their transactions pruned from the pool, and
    marked for relay at most once per block id. A block whose parent is
    unknown waits in the orphan buffer; when the parent later arrives the
    whole descendant cascade is replayed. Anything else is discarded with
    its error kind.

    A block whose id is already in the tree is discarded as a duplicate
    without revalidation: ids are content digests, so under gossip (where a
    node hears each block up to members-1 times) id equality means the same
    block, and skipping the digest recompute is what keeps large fan-out
    runs cheap.
    """
    receipt = BlockReceipt()
    queue = deque([block])
    while queue:
        blk = queue.popleft()
        if blk.block_id in node.tree:
            receipt.discarded.append((blk, BlockError.DUPLICATE))
            continue
        err = node.tree.validate(blk)
        if err is None:
            node.tree.append(blk)
            node.mempool.remove_many(blk.txs)
            receipt.appended.append(blk)
            if blk.block_id not in node.relayed:
                node.relayed.add(blk.block_id)
                receipt.relay.append(blk)
            for waiting in node.orphans.pop(blk.block_id, []):
                node.orphan_ids.discard(waiting.block_id)
                queue.append(waiting)
        elif err is BlockError.MISSING_PARENT:
            if blk.block_id not in node.orphan_ids and blk.block_id not in node.tree:
                node.orphans.setdefault(blk.parent, []).append(blk)
                node.orphan_ids.add(blk.block_id)
                receipt.orphaned.append(blk)
            # A re-delivered orphan is silently ignored; it is already queued.
        else:
            receipt.discarded.append((blk, err))
    return receipt


@dataclass
class ChainStats:
    """Cross-agent tallies one experiment shares between its behaviors."""

    blocks_proposed: int = 0
    proposal_times: list[int] = field(default_factory=list)
    block_created_at: dict[bytes, int] = field(default_factory=dict)
    append_counts: dict[bytes, int] = field(default_factory=dict)
    last_append: dict[bytes, int] = field(default_factory=dict)
    duplicate_txs: int = 0
    blocks_discarded: int = 0
    orphans_buffered: int = 0

    def note_proposal(self, block: Block) -> None:
        self.blocks_proposed += 1
        self.proposal_times.append(block.created_at)
        self.block_created_at[block.block_id] = block.created_at

    def note_append(self, block_id: bytes, now: int) -> None:
        self.append_counts[block_id] = self.append_counts.get(block_id, 0) + 1
        self.last_append[block_id] = now


@dataclass(frozen=True, slots=True)
class ProposeTimer:
    TAG = "propose_timer"


@dataclass(frozen=True, slots=True)
class TxTimer:
    TAG = "tx_timer"


class NodeBehavior(AgentBehavior):
    """A full node: proposes blocks at its rate and gossips what it learns.

    Proposal timers stop once the horizon is reached; message handling
    continues so in-flight traffic drains naturally.
    """

    def __init__(
        self,
        group: int,
        block_rate: float,
        max_txs_per_block: int,
        horizon: Optional[int] = None,
        stats: Optional[ChainStats] = None,
        gossip_role: str = NODE_ROLE,
        fork_rule: Callable[[BlockTree], bytes] = longest_chain,
    ):
        self.group = group
        self.block_rate = block_rate
        self.max_txs_per_block = max_txs_per_block
        self.horizon = horizon
        self.stats = stats if stats is not None else ChainStats()
        self.gossip_role = gossip_role
        self.fork_rule = fork_rule
        self.state: Optional[NodeState] = None

    def on_activate(self, ctx: "AgentContext") -> None:
        self.state = NodeState(
            agent_id=ctx.agent_id,
            tree=BlockTree(),
            mempool=Mempool(),
            block_rate=self.block_rate,
            role=NodeRole.PROPOSER,
            fork_rule=self.fork_rule,
        )
        self._schedule_proposal(ctx)

    def _schedule_proposal(self, ctx: "AgentContext") -> None:
        delay = next_block_delay(self.block_rate, ctx.rng)
        if self.horizon is not None and ctx.now + delay >= self.horizon:
            return
        ctx.schedule(ProposeTimer(), delay)

    def on_event(self, ctx: "AgentContext", payload) -> None:
        if type(payload) is ProposeTimer:
            block = propose(self.state, ctx.now, self.max_txs_per_block)
            self.stats.note_proposal(block)
            self.stats.note_append(block.block_id, ctx.now)
            ctx.send(self.group, ToRole(self.gossip_role), block)
            self._schedule_proposal(ctx)
        elif type(payload) is Delivery:
            inner = payload.payload
            if type(inner) is Block:
                receipt = on_block_received(self.state, inner)
                for blk in receipt.appended:
                    self.stats.note_append(blk.block_id, ctx.now)
                for blk in receipt.relay:
                    ctx.send(self.group, ToRole(self.gossip_role), blk)
                self.stats.blocks_discarded += len(receipt.discarded)
                self.stats.orphans_buffered += len(receipt.orphaned)
            elif type(inner) is Transaction:
                if not submit_tx(self.state, inner):
                    self.stats.duplicate_txs += 1


class ClientBehavior(AgentBehavior):
    """A workload source: submits transactions to the nodes as a Poisson
    process at tx_rate per tick, stopping at the horizon."""

    def __init__(
        self,
        group: int,
        tx_rate: float,
        horizon: Optional[int] = None,
        payload_size: int = 250,
        submit_role: str = NODE_ROLE,
    ):
        self.group = group
        self.tx_rate = tx_rate
        self.horizon = horizon
        self.payload_size = payload_size
        self.submit_role = submit_role
        self.tx_count = 0

    def on_activate(self, ctx: "AgentContext") -> None:
        self._schedule_tx(ctx)

    def _schedule_tx(self, ctx: "AgentContext") -> None:
        if not self.tx_rate > 0:
            return
        # Same memoryless interval model as block proposals.
        delay = next_block_delay(self.tx_rate, ctx.rng)
        if self.horizon is not None and ctx.now + delay >= self.horizon:
            return
        ctx.schedule(TxTimer(), delay)

    def on_event(self, ctx: "AgentContext", payload) -> None:
        if type(payload) is TxTimer:
            tx = make_transaction(ctx.agent_id, ctx.now, self.payload_size, self.tx_count)
            self.tx_count += 1
            ctx.send(self.group, ToRole(self.submit_role), tx)
            self._schedule_tx(ctx)
