"""Chained and aligned polar constructions for finite channel sets.

Two equivalent routes to a code that is simultaneously good for several
channels whose good index sets differ:

* ``ChainSpec``/``chain_encode``/``chain_decode``: k standard polar blocks
  where each block's one-sidedly-good set repeats into the next block's
  complementary set; decoded left-to-right or right-to-left depending on
  the channel in use.
* ``align``/``aligned_decode``: an extra polarization layer pairs an index
  that is good only for the first channel with one good only for the
  second, converting the pair into one index that is bad for both
  (processed first, frozen) and one that is good for both.  The result is
  again a polar block with a fixed interleaved processing order, so the
  step can be recursed, halving the mismatched fraction each time.

Index typing: each index carries a tuple of good-set membership bits, one
per channel; the all-ones type marks indices usable for every channel.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .channels import BmsChannel, capacity
from .errors import ConstructionError
from .polar import (
    PolarCodeSpec,
    SCBatch,
    build_spec,
    f_llr,
    g_llr,
    hard_decision,
    polar_transform,
)


def classify_indices(specs: list[PolarCodeSpec]) -> np.ndarray:
    """Per-index membership matrix, shape (N, t), one column per channel."""
    if not specs:
        raise ValueError("need at least one spec")
    N = specs[0].N
    if any(s.N != N for s in specs):
        raise ValueError("all specs must share the same block length")
    types = np.zeros((N, len(specs)), dtype=np.uint8)
    for c, s in enumerate(specs):
        types[s.good_set, c] = 1
    return types


def compound_gap(types: np.ndarray, rate: float) -> float:
    """Shortfall of the everywhere-good fraction below the smallest
    per-channel good fraction: min_c |A_c|/N - |intersection|/N."""
    types = np.asarray(types)
    n = types.shape[0]
    per_channel = types.sum(axis=0).min() / n
    joint = np.all(types == 1, axis=1).sum() / n
    del rate  # the nominal rate is implied by the per-channel counts
    return float(per_channel - joint)


# -- chaining ---------------------------------------------------------------


@dataclass(frozen=True)
class ChainSpec:
    """k polar blocks with one-sided good sets repeated into neighbours.

    ``inter`` is the set good for both channels (fresh information in every
    block), ``a_only``/``b_only`` the one-sided sets of equal size S.  Block
    i < k-1 carries fresh information on a_only, which block i+1 repeats on
    b_only (matched in sorted-position order).  Everything else is frozen
    to zero.
    """

    k: int
    n: int
    inter: np.ndarray
    a_only: np.ndarray
    b_only: np.ndarray
    label_a: str = ""
    label_b: str = ""
    bound_a: float = 0.0
    bound_b: float = 0.0

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("chain length k must be >= 2")
        inter = np.sort(np.asarray(self.inter, dtype=np.int64))
        a_only = np.sort(np.asarray(self.a_only, dtype=np.int64))
        b_only = np.sort(np.asarray(self.b_only, dtype=np.int64))
        if len(a_only) != len(b_only):
            raise ValueError("one-sided sets must have equal cardinality")
        all_idx = np.concatenate([inter, a_only, b_only])
        if len(np.unique(all_idx)) != len(all_idx):
            raise ValueError("index sets must be disjoint")
        if all_idx.size and (all_idx.min() < 0 or all_idx.max() >= self.N):
            raise ValueError("index out of range")
        for name, arr in (("inter", inter), ("a_only", a_only), ("b_only", b_only)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def N(self) -> int:
        return 1 << self.n

    @property
    def S(self) -> int:
        return len(self.a_only)

    @property
    def info_length(self) -> int:
        return self.k * len(self.inter) + (self.k - 1) * self.S

    @property
    def rate(self) -> float:
        return (len(self.inter) + (self.k - 1) / self.k * self.S) / self.N

    def to_text(self) -> str:
        return json.dumps(
            {
                "format": "chain-spec-v1",
                "k": self.k,
                "n": self.n,
                "inter": self.inter.tolist(),
                "a_only": self.a_only.tolist(),
                "b_only": self.b_only.tolist(),
                "label_a": self.label_a,
                "label_b": self.label_b,
                "bound_a": self.bound_a,
                "bound_b": self.bound_b,
            },
            sort_keys=True,
        )

    @classmethod
    def from_text(cls, text: str) -> "ChainSpec":
        d = json.loads(text)
        if d.get("format") != "chain-spec-v1":
            raise ValueError("not a chain spec")
        return cls(
            k=d["k"],
            n=d["n"],
            inter=np.array(d["inter"], dtype=np.int64),
            a_only=np.array(d["a_only"], dtype=np.int64),
            b_only=np.array(d["b_only"], dtype=np.int64),
            label_a=d["label_a"],
            label_b=d["label_b"],
            bound_a=d["bound_a"],
            bound_b=d["bound_b"],
        )


def _split_sets(spec_a: PolarCodeSpec, spec_b: PolarCodeSpec):
    """(inter, a_only, b_only) with the larger one-sided set trimmed down by
    dropping its least reliable members."""
    a = set(spec_a.good_set.tolist())
    b = set(spec_b.good_set.tolist())
    inter = np.array(sorted(a & b), dtype=np.int64)
    a_only = np.array(sorted(a - b), dtype=np.int64)
    b_only = np.array(sorted(b - a), dtype=np.int64)
    if len(a_only) > len(b_only):
        keep = np.argsort(spec_a.z[a_only], kind="stable")[: len(b_only)]
        a_only = np.sort(a_only[keep])
    elif len(b_only) > len(a_only):
        keep = np.argsort(spec_b.z[b_only], kind="stable")[: len(a_only)]
        b_only = np.sort(b_only[keep])
    return inter, a_only, b_only


def chain_spec_from_channels(
    ch_a: BmsChannel, ch_b: BmsChannel, n: int, rate: float, k: int
) -> ChainSpec:
    spec_a = build_spec(ch_a, n, rate)
    spec_b = build_spec(ch_b, n, rate)
    inter, a_only, b_only = _split_sets(spec_a, spec_b)
    return ChainSpec(
        k=k,
        n=n,
        inter=inter,
        a_only=a_only,
        b_only=b_only,
        label_a=ch_a.label,
        label_b=ch_b.label,
        bound_a=spec_a.bound,
        bound_b=spec_b.bound,
    )


def chain_encode(info, spec: ChainSpec) -> np.ndarray:
    """Encode ``info`` (length k*|inter| + (k-1)*S, or a batch of such rows)
    into the k*N chained codeword bits.

    Information is consumed block-major: for each block, the inter bits in
    ascending index order, then (except in the last block) the a_only bits.
    """
    squeeze = np.asarray(info).ndim == 1
    info = np.atleast_2d(np.asarray(info, dtype=np.uint8)) & 1
    if info.shape[1] != spec.info_length:
        raise ValueError(
            f"info length must be {spec.info_length}, got {info.shape[1]}"
        )
    B = info.shape[0]
    u = np.zeros((B, spec.k, spec.N), dtype=np.uint8)
    pos = 0
    for i in range(spec.k):
        u[:, i, spec.inter] = info[:, pos : pos + len(spec.inter)]
        pos += len(spec.inter)
        if i < spec.k - 1:
            u[:, i, spec.a_only] = info[:, pos : pos + spec.S]
            pos += spec.S
        if i > 0:
            u[:, i, spec.b_only] = u[:, i - 1, spec.a_only]
    x = polar_transform(u.reshape(B * spec.k, spec.N)).reshape(B, spec.k * spec.N)
    return x[0] if squeeze else x


def _decode_block(llrs, info_mask, frozen_values, exact=True):
    """SC-decode one block: decisions at info_mask indices, pinned values
    elsewhere.  llrs (B, N), frozen_values (B, N); returns u (B, N)."""
    dec = SCBatch(llrs, exact=exact)
    u = np.zeros((dec.B, dec.N), dtype=np.uint8)
    for i in range(dec.N):
        forced = None if info_mask[i] else frozen_values[:, i]
        u[:, i], _ = dec.step(forced)
    return u


def chain_decode(llrs, which_channel: str, spec: ChainSpec, exact: bool = True):
    """Decode a chained codeword given which design channel carried it.

    "first" decodes blocks left to right, copying each block's a_only
    decisions into the next block's b_only pins; "second" decodes right to
    left symmetrically.  Returns the info bits in encode order.
    """
    squeeze = np.asarray(llrs).ndim == 1
    llrs = np.atleast_2d(np.asarray(llrs, dtype=float))
    if llrs.shape[1] != spec.k * spec.N:
        raise ValueError(f"expected {spec.k * spec.N} LLRs, got {llrs.shape[1]}")
    B = llrs.shape[0]
    blocks = llrs.reshape(B, spec.k, spec.N)
    inter_dec = [None] * spec.k
    aonly_dec = [None] * spec.k

    if which_channel == "first":
        carried = np.zeros((B, spec.S), dtype=np.uint8)
        for i in range(spec.k):
            info_mask = np.zeros(spec.N, dtype=bool)
            info_mask[spec.inter] = True
            if i < spec.k - 1:
                info_mask[spec.a_only] = True
            frozen = np.zeros((B, spec.N), dtype=np.uint8)
            frozen[:, spec.b_only] = carried
            u = _decode_block(blocks[:, i], info_mask, frozen, exact)
            inter_dec[i] = u[:, spec.inter]
            aonly_dec[i] = u[:, spec.a_only]
            carried = u[:, spec.a_only]
    elif which_channel == "second":
        carried = np.zeros((B, spec.S), dtype=np.uint8)  # a_only of block k-1 is 0
        for i in range(spec.k - 1, -1, -1):
            info_mask = np.zeros(spec.N, dtype=bool)
            info_mask[spec.inter] = True
            if i > 0:
                info_mask[spec.b_only] = True
            frozen = np.zeros((B, spec.N), dtype=np.uint8)
            frozen[:, spec.a_only] = carried
            u = _decode_block(blocks[:, i], info_mask, frozen, exact)
            inter_dec[i] = u[:, spec.inter]
            aonly_dec[i] = carried  # this block's own a_only content
            carried = u[:, spec.b_only]  # reveals block i-1's a_only
    else:
        raise ValueError('which_channel must be "first" or "second"')

    pieces = []
    for i in range(spec.k):
        pieces.append(inter_dec[i])
        if i < spec.k - 1:
            pieces.append(aonly_dec[i])
    info = np.concatenate(pieces, axis=1) if pieces else np.zeros((B, 0), np.uint8)
    return info[0] if squeeze else info


# -- aligned blocks ----------------------------------------------------------


class BlockSpec:
    """Common interface of leaf polar blocks and aligned composites.

    Slots are the block's input coordinates, numbered 0..length-1; ``order``
    lists slot ids in processing order, ``types`` holds one membership bit
    per tracked channel, and ``z`` per-slot reliability bounds per channel
    (may be None for type-only algebra).
    """

    length: int
    types: np.ndarray
    z: np.ndarray | None
    order: np.ndarray
    depth: int

    @property
    def n_channels(self) -> int:
        return self.types.shape[1]

    def info_slots(self) -> np.ndarray:
        """Slots of all-ones type, in processing order."""
        mask = np.all(self.types == 1, axis=1)
        return np.array([s for s in self.order if mask[s]], dtype=np.int64)

    def mismatch_counts(self) -> tuple[int, int]:
        """(#(working-good, new-bad), #(working-bad, new-good)) where the
        working set is the AND of all channels except the last."""
        working = (
            np.all(self.types[:, :-1] == 1, axis=1)
            if self.n_channels > 1
            else np.ones(self.length, dtype=bool)
        )
        new = self.types[:, -1] == 1
        return int(np.sum(working & ~new)), int(np.sum(~working & new))


class LeafBlock(BlockSpec):
    """A standard polar block with per-channel types and reliabilities."""

    def __init__(self, types: np.ndarray, z: np.ndarray | None = None,
                 labels: tuple[str, ...] = ()):
        types = np.asarray(types, dtype=np.uint8)
        if types.ndim != 2:
            raise ValueError("types must be a (N, t) matrix")
        self.length = types.shape[0]
        if self.length & (self.length - 1):
            raise ValueError("leaf block length must be a power of two")
        self.types = types
        self.z = None if z is None else np.asarray(z, dtype=float)
        self.order = np.arange(self.length, dtype=np.int64)
        self.depth = 0
        self.labels = tuple(labels)

    @classmethod
    def from_specs(cls, specs: list[PolarCodeSpec]) -> "LeafBlock":
        types = classify_indices(specs)
        z = np.stack([s.z for s in specs], axis=1)
        return cls(types, z, labels=tuple(s.channel_label for s in specs))


class AlignedBlock(BlockSpec):
    """Two equal-length blocks joined by matching polarization steps.

    Composite slot ids: the left child's slots keep their ids, the right
    child's are offset by the child length.  ``pairs`` lists matched
    (left_slot, right_slot) couples: the left member of a pair carries the
    polarized sum (processed first, typed all-zeros) and the right member
    the repeated bit (processed second, typed all-ones).
    """

    def __init__(self, left: BlockSpec, right: BlockSpec,
                 pairs: list[tuple[int, int]]):
        if left.length != right.length:
            raise ValueError("aligned children must have equal length")
        if left.n_channels != right.n_channels:
            raise ValueError("aligned children must track the same channels")
        self.left = left
        self.right = right
        self.pairs = [(int(a), int(b)) for a, b in pairs]
        L = left.length
        self.length = 2 * L
        self.depth = max(left.depth, right.depth) + 1

        types = np.concatenate([left.types, right.types], axis=0).copy()
        for a, b in self.pairs:
            types[a, :] = 0
            types[L + b, :] = 1
        self.types = types

        if left.z is not None and right.z is not None:
            z = np.concatenate([left.z, right.z], axis=0).copy()
            for a, b in self.pairs:
                za, zb = left.z[a], right.z[b]
                z[a] = np.clip(za + zb - za * zb, 0.0, 1.0)
                z[L + b] = za * zb
            self.z = z
        else:
            self.z = None

        self.order = self._build_order()

    def _build_order(self) -> np.ndarray:
        L = self.left.length
        seq_l = list(self.left.order)
        seq_r = list(self.right.order)
        pos_l = {s: i for i, s in enumerate(seq_l)}
        pos_r = {s: i for i, s in enumerate(seq_r)}
        pairs = sorted(self.pairs, key=lambda ab: pos_l[ab[0]])
        if [pos_r[b] for _, b in pairs] != sorted(pos_r[b] for _, b in pairs):
            raise ValueError("pair members must be matched in increasing order")
        out = []
        il = ir = 0
        for a, b in pairs:
            while seq_l[il] != a:
                out.append(seq_l[il])
                il += 1
            while seq_r[ir] != b:
                out.append(L + seq_r[ir])
                ir += 1
            out.append(a)
            out.append(L + b)
            il += 1
            ir += 1
        out.extend(seq_l[il:])
        out.extend(L + s for s in seq_r[ir:])
        return np.array(out, dtype=np.int64)

    def pairs_per_level(self) -> list[list[tuple[int, int]]]:
        """Matched pairs grouped by recursion level, deepest first."""
        levels = []
        if isinstance(self.left, AlignedBlock):
            levels.extend(self.left.pairs_per_level())
        levels.append(self.pairs)
        return levels


def _one_sided_slots(block: BlockSpec):
    """Slots typed (working-good, new-bad) and (working-bad, new-good), each
    listed in the block's processing order."""
    if block.n_channels < 2:
        raise ValueError("alignment needs at least two tracked channels")
    working = np.all(block.types[:, :-1] == 1, axis=1)
    new = block.types[:, -1] == 1
    give = [s for s in block.order if working[s] and not new[s]]
    take = [s for s in block.order if not working[s] and new[s]]
    return give, take


def align(block1: BlockSpec, block2: BlockSpec) -> AlignedBlock:
    """One alignment step: polarize block1's (working-good, new-bad) slots
    with block2's (working-bad, new-good) slots, matched in processing
    order.  Unequal one-sided counts are trimmed by dropping the least
    reliable surplus (requires reliability data); the trimmed slots pass
    through unmatched.
    """
    give, take = _one_sided_slots(block1)
    take = _one_sided_slots(block2)[1]
    if len(give) != len(take):
        surplus = abs(len(give) - len(take))
        if block1.z is None or block2.z is None:
            raise ValueError(
                f"one-sided sets differ by {surplus} and no reliability data "
                "is available for trimming"
            )
        if len(give) > len(take):
            scores = np.max(block1.z[give][:, :-1], axis=1)
            drop = set(np.asarray(give)[np.argsort(-scores, kind="stable")[:surplus]])
            give = [s for s in give if s not in drop]
        else:
            scores = block2.z[take][:, -1]
            drop = set(np.asarray(take)[np.argsort(-scores, kind="stable")[:surplus]])
            take = [s for s in take if s not in drop]
    return AlignedBlock(block1, block2, list(zip(give, take)))


def align_recurse(block: BlockSpec, depth: int) -> BlockSpec:
    """Align a block with a copy of itself ``depth`` times."""
    for _ in range(depth):
        block = align(block, block)
    return block


def validate_order(block: AlignedBlock) -> None:
    """Structural check of the interleaved processing order: every matched
    pair is adjacent with the left member first, children's slots appear in
    their own processing order, and all left-child slots preceding a pair's
    left member are processed before it."""
    L = block.left.length
    order = list(block.order)
    pos = {s: i for i, s in enumerate(order)}
    if sorted(order) != list(range(block.length)):
        raise AssertionError("order is not a permutation")
    left_seq = [s for s in order if s < L]
    right_seq = [s - L for s in order if s >= L]
    if left_seq != list(block.left.order) or right_seq != list(block.right.order):
        raise AssertionError("children are not processed in their own order")
    for a, b in block.pairs:
        if pos[L + b] != pos[a] + 1:
            raise AssertionError(f"pair ({a}, {b}) is not adjacent")
    for node in (block.left, block.right):
        if isinstance(node, AlignedBlock):
            validate_order(node)


def leaf_lengths(block: BlockSpec) -> list[int]:
    if isinstance(block, AlignedBlock):
        return leaf_lengths(block.left) + leaf_lengths(block.right)
    return [block.length]


def aligned_encode(info, block: BlockSpec) -> np.ndarray:
    """Encode info bits (assigned to all-ones slots in processing order,
    everything else frozen to zero) into the composite codeword: the
    matching layers push values down to the leaf blocks, whose transforms
    are concatenated left to right."""
    squeeze = np.asarray(info).ndim == 1
    info = np.atleast_2d(np.asarray(info, dtype=np.uint8)) & 1
    slots = block.info_slots()
    if info.shape[1] != len(slots):
        raise ValueError(f"info length must be {len(slots)}, got {info.shape[1]}")
    values = np.zeros((info.shape[0], block.length), dtype=np.uint8)
    values[:, slots] = info
    cw = _push_down(block, values)
    return cw[0] if squeeze else cw


def _push_down(block: BlockSpec, values: np.ndarray) -> np.ndarray:
    if isinstance(block, AlignedBlock):
        L = block.left.length
        left_vals = values[:, :L].copy()
        right_vals = values[:, L:].copy()
        for a, b in block.pairs:
            # slot a holds the pair sum, slot L+b the repeated bit
            left_vals[:, a] = values[:, a] ^ values[:, L + b]
            right_vals[:, b] = values[:, L + b]
        return np.concatenate(
            [_push_down(block.left, left_vals), _push_down(block.right, right_vals)],
            axis=1,
        )
    return polar_transform(values)


class _NodeDecoder:
    """Sequential peek/step decoder over a BlockSpec tree.

    ``peek`` returns the LLR of the node's next slot in processing order;
    ``step(bits)`` commits it.  Matched pairs are realized as explicit f/g
    combinations over the children's exposed LLRs.
    """

    def __init__(self, block: BlockSpec, llrs: np.ndarray, exact: bool):
        self.block = block
        self.exact = exact
        if isinstance(block, AlignedBlock):
            L = block.left.length
            split = sum(leaf_lengths(block.left))
            self.left = _NodeDecoder(block.left, llrs[:, :split], exact)
            self.right = _NodeDecoder(block.right, llrs[:, split:], exact)
            pair_left = {a for a, _ in block.pairs}
            pair_right = {b for _, b in block.pairs}
            self.ops = []
            for slot in block.order:
                if slot < L:
                    self.ops.append(("pa" if slot in pair_left else "l", slot))
                else:
                    self.ops.append(
                        ("pb" if slot - L in pair_right else "r", slot - L)
                    )
            self._alpha = None
        else:
            self.leaf = SCBatch(llrs, exact=exact)
        self._pos = 0
        self._peeked = None

    def peek(self) -> np.ndarray:
        if self._peeked is not None:
            return self._peeked
        if not isinstance(self.block, AlignedBlock):
            self._peeked = self.leaf.peek()
            return self._peeked
        op, _ = self.ops[self._pos]
        if op == "l":
            self._peeked = self.left.peek()
        elif op == "r":
            self._peeked = self.right.peek()
        elif op == "pa":
            self._peeked = f_llr(self.left.peek(), self.right.peek(), self.exact)
        else:  # pb: the pair sum alpha was already committed
            self._peeked = g_llr(self.left.peek(), self.right.peek(), self._alpha)
        return self._peeked

    def step(self, bits: np.ndarray) -> None:
        self.peek()
        self._peeked = None
        if not isinstance(self.block, AlignedBlock):
            self.leaf.step(bits)
            self._pos += 1
            return
        op, _ = self.ops[self._pos]
        if op == "l":
            self.left.step(bits)
        elif op == "r":
            self.right.step(bits)
        elif op == "pa":
            self._alpha = bits
        else:
            self.left.step(self._alpha ^ bits)
            self.right.step(bits)
            self._alpha = None
        self._pos += 1


def aligned_decode(llrs, block: BlockSpec, exact: bool = True):
    """SC-decode a composite block following its processing order.

    All-ones slots carry information; every other slot is frozen to zero.
    Returns the info bits in processing order.
    """
    squeeze = np.asarray(llrs).ndim == 1
    llrs = np.atleast_2d(np.asarray(llrs, dtype=float))
    total = sum(leaf_lengths(block))
    if llrs.shape[1] != total:
        raise ValueError(f"expected {total} LLRs, got {llrs.shape[1]}")
    B = llrs.shape[0]
    dec = _NodeDecoder(block, llrs, exact)
    info_mask = np.all(block.types == 1, axis=1)
    out = []
    for slot in block.order:
        llr = dec.peek()
        if info_mask[slot]:
            bits = hard_decision(llr)
            out.append(bits)
        else:
            bits = np.zeros(B, dtype=np.uint8)
        dec.step(bits)
    info = np.stack(out, axis=1) if out else np.zeros((B, 0), dtype=np.uint8)
    return info[0] if squeeze else info


def aligned_genie_failures(llrs, block: BlockSpec, slot_values, exact: bool = True):
    """Per-slot genie failure indicators (wrong hard decision or zero LLR),
    shape (B, length), indexed by slot id; decisions follow the true
    values in ``slot_values`` (B, length)."""
    llrs = np.atleast_2d(np.asarray(llrs, dtype=float))
    slot_values = np.atleast_2d(np.asarray(slot_values, dtype=np.uint8))
    dec = _NodeDecoder(block, llrs, exact)
    fails = np.zeros((llrs.shape[0], block.length), dtype=bool)
    for slot in block.order:
        llr = dec.peek()
        truth = slot_values[:, slot]
        fails[:, slot] = (hard_decision(llr) != truth) | (llr == 0.0)
        dec.step(truth)
    return fails


@dataclass
class UniversalBlockReport:
    """Construction record for a multi-channel aligned block."""

    block: BlockSpec
    kappas: list[int]
    initial_gap: float
    final_info_fraction: float
    length_bound: float
    channel_labels: list[str]


def build_universal_block(
    channels: list[BmsChannel],
    n: int,
    rate: float,
    eps: float,
    max_depth_per_stage: int = 32,
) -> UniversalBlockReport:
    """Fold channels in one at a time, aligning until the per-stage
    mismatched fraction drops to eps/t, then freezing the stragglers.

    Stage recursion counts come from the measured set counts; the analytic
    length bound (2 * gap * t / eps)^(t-1) * 2^n is checked afterwards
    (degenerate zero-recursion stages make the raw bound smaller than the
    starting length, so the check is against max(2^n, bound)).
    """
    t = len(channels)
    if t < 2:
        raise ValueError("need at least two channels")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must be in (0, 1)")
    caps = [capacity(ch) for ch in channels]
    if min(caps) <= rate:
        raise ValueError(
            f"every channel capacity (min {min(caps):.4f}) must exceed the rate"
        )
    specs = [build_spec(ch, n, rate) for ch in channels]
    full_types = classify_indices(specs)
    initial_gap = compound_gap(full_types, rate)
    z_all = np.stack([s.z for s in specs], axis=1)

    # Track types only for processed channels; reliabilities for all.
    block: BlockSpec = LeafBlock(
        full_types[:, :1], z_all, labels=tuple(ch.label for ch in channels)
    )
    kappas = []
    for j in range(1, t):
        block = _with_new_channel_column(block, j, rate)
        kappa = 0
        while True:
            mism, _ = block.mismatch_counts()
            if mism / block.length <= eps / t:
                break
            if kappa >= max_depth_per_stage:
                raise ConstructionError(
                    f"stage {j}: mismatch fraction {mism / block.length:.4g} "
                    f"still above {eps / t:.4g} after {kappa} recursions"
                )
            block = align(block, block)
            kappa += 1
        kappas.append(kappa)

    info_fraction = len(block.info_slots()) / block.length
    bound = max(
        float(1 << n),
        (2.0 * initial_gap * t / eps) ** (t - 1) * (1 << n) if initial_gap > 0 else 0.0,
    )
    if block.length > bound + 1e-9:
        raise ConstructionError(
            f"constructed length {block.length} exceeds the bound {bound:.1f}"
        )
    return UniversalBlockReport(
        block=block,
        kappas=kappas,
        initial_gap=initial_gap,
        final_info_fraction=info_fraction,
        length_bound=bound,
        channel_labels=[ch.label for ch in channels],
    )


def _with_new_channel_column(block: BlockSpec, channel_idx: int, rate: float):
    """Append the membership column of channel ``channel_idx``: the
    floor(rate * length) slots with the smallest propagated reliability
    bound for that channel."""
    k = int(math.floor(rate * block.length))
    order = np.argsort(block.z[:, channel_idx], kind="stable")
    col = np.zeros((block.length, 1), dtype=np.uint8)
    col[order[:k], 0] = 1
    return _replace_types(block, np.concatenate([block.types, col], axis=1))


def _replace_types(block: BlockSpec, types: np.ndarray) -> BlockSpec:
    if isinstance(block, AlignedBlock):
        clone = AlignedBlock.__new__(AlignedBlock)
        clone.left = block.left
        clone.right = block.right
        clone.pairs = block.pairs
        clone.length = block.length
        clone.depth = block.depth
        clone.types = types
        clone.z = block.z
        clone.order = block.order
        return clone
    clone = LeafBlock.__new__(LeafBlock)
    clone.length = block.length
    clone.types = types
    clone.z = block.z
    clone.order = block.order
    clone.depth = 0
    clone.labels = getattr(block, "labels", ())
    return clone


# -- serialization -----------------------------------------------------------


def block_to_dict(block: BlockSpec) -> dict:
    d = {
        "length": block.length,
        "depth": block.depth,
        "types": block.types.tolist(),
        "order": block.order.tolist(),
        "z": None if block.z is None else block.z.tolist(),
    }
    if isinstance(block, AlignedBlock):
        d["kind"] = "aligned"
        d["pairs"] = [list(p) for p in block.pairs]
        d["left"] = block_to_dict(block.left)
        d["right"] = block_to_dict(block.right)
    else:
        d["kind"] = "leaf"
        d["labels"] = list(getattr(block, "labels", ()))
    return d


def block_from_dict(d: dict) -> BlockSpec:
    z = None if d["z"] is None else np.array(d["z"], dtype=float)
    if d["kind"] == "leaf":
        block = LeafBlock(np.array(d["types"], dtype=np.uint8), z,
                          labels=tuple(d.get("labels", ())))
        return block
    left = block_from_dict(d["left"])
    right = block_from_dict(d["right"])
    block = AlignedBlock(left, right, [tuple(p) for p in d["pairs"]])
    # Restore possibly overridden type columns (stage bookkeeping).
    block.types = np.array(d["types"], dtype=np.uint8)
    if z is not None:
        block.z = z
    return block


def block_to_text(block: BlockSpec) -> str:
    return json.dumps({"format": "aligned-block-v1", "root": block_to_dict(block)},
                      sort_keys=True)


def block_from_text(text: str) -> BlockSpec:
    d = json.loads(text)
    if d.get("format") != "aligned-block-v1":
        raise ValueError("not an aligned block spec")
    return block_from_dict(d["root"])
