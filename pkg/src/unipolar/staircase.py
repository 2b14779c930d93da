"""Staircase construction: shifted polar blocks with Reed-Solomon columns.

Geometry (all indices 0-based).  A staircase stacks N = 2^n polar blocks of
length N, block j shifted j positions right, so its columns 0..2N-2 hold at
most one bit per row.  Laying k staircases side by side merges each row j
into k consecutive blocks covering global columns j .. j + kN - 1; the
extended staircase has (k+1)N - 1 columns, of which columns N-1 .. kN-1
have full height N, and a full-height column shows every polar index
exactly once.  Stacking n copies of the extended staircase makes the n
bits at a fixed (row, column) coordinate a symbol of GF(2^n), and each
full-height column carries one Reed-Solomon codeword of length N over that
field.

The decoder sweeps columns left to right, advancing one successive-
cancellation step per row.  In a full-height column, rows whose current
polar index is good for the actual channel (and whose per-copy LLRs are
nonzero) supply known symbols; the rest are erasures filled by the
column's Reed-Solomon code, and every recovered bit is pinned into its row
decoder before the next column starts.

Serialized codewords are staircase-major: copy s, then row j, then the
row's k blocks left to right, then the N bit positions of each block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import BmsChannel
from .errors import DecodingError, UnrecoverableErasure
from .gf_rs import GfField, RsCode
from .polar import SCBatch, blocklength_helper, build_spec, polar_transform


@dataclass(frozen=True)
class StaircaseParams:
    """Geometry of the construction: N = 2^n rows per staircase, k
    staircases per row, n stacked copies, and the per-column Reed-Solomon
    dimension."""

    n: int
    k: int
    rs_dimension: int

    def __post_init__(self):
        # Pure geometry: any n >= 1 is allowed here; building an actual
        # StaircaseCode additionally needs a GF(2^n) table (n <= 16).
        if self.n < 1:
            raise ValueError("exponent n must be >= 1")
        if self.k < 1:
            raise ValueError("horizontal copies k must be >= 1")
        if not 0 <= self.rs_dimension <= self.N:
            raise ValueError("rs_dimension must be in [0, N]")

    @property
    def N(self) -> int:
        return 1 << self.n

    @property
    def staircases(self) -> int:
        return self.n

    @property
    def total_columns(self) -> int:
        return (self.k + 1) * self.N - 1

    @property
    def full_height_columns(self) -> range:
        return range(self.N - 1, self.k * self.N)

    @property
    def blocklength(self) -> int:
        return self.n * self.k * self.N * self.N


def column_occupancy(params: StaircaseParams, i: int):
    """Rows intersecting column ``i`` with the polar index each shows.

    Returns [(row, polar_index)]; the polar index at (row j, column i) is
    (i - j) mod N.  Full-height columns return a permutation of 0..N-1.
    """
    if not 0 <= i < params.total_columns:
        raise ValueError(f"column must be in [0, {params.total_columns}), got {i}")
    N, k = params.N, params.k
    lo = max(0, i - k * N + 1)
    hi = min(N - 1, i)
    return [(j, (i - j) % N) for j in range(lo, hi + 1)]


class StaircaseCode:
    """A staircase code instance.

    Parameters
    ----------
    params : StaircaseParams
    design_rate : float, optional
        Rate at which the decoder selects per-channel good sets; defaults
        to rs_dimension / N (no erasure slack).  floor(design_rate * N)
        must be at least rs_dimension.
    boundary_policy : None or sequence of int
        None freezes every boundary-column index to zero.  A sequence
        loads information on those boundary indices (they should be good
        for every channel in the compound family) and freezes the rest.
    reduction_poly : int, optional
        Override for the GF(2^n) reduction polynomial.
    """

    def __init__(self, params: StaircaseParams, design_rate: float | None = None,
                 boundary_policy=None, reduction_poly: int | None = None,
                 design_spec=None):
        self.params = params
        self.design_rate = (
            params.rs_dimension / params.N if design_rate is None else design_rate
        )
        good_count = int(math.floor(self.design_rate * params.N))
        if good_count < params.rs_dimension:
            raise ValueError(
                f"design rate {self.design_rate:g} yields {good_count} good "
                f"indices < rs_dimension {params.rs_dimension}"
            )
        if boundary_policy is None:
            self.boundary_subset = None
        else:
            subset = np.unique(np.asarray(list(boundary_policy), dtype=np.int64))
            if subset.size and (subset.min() < 0 or subset.max() >= params.N):
                raise ValueError("boundary subset indices out of range")
            self.boundary_subset = subset
        self.field = GfField(params.n, reduction_poly)
        self.rs = RsCode(self.field, params.rs_dimension)
        self.design_spec = design_spec

    # -- info layout -------------------------------------------------------

    def _boundary_info_positions(self, i: int):
        if self.boundary_subset is None:
            return []
        subset = set(self.boundary_subset.tolist())
        return [(j, t) for j, t in column_occupancy(self.params, i) if t in subset]

    @property
    def info_length(self) -> int:
        p = self.params
        full = len(p.full_height_columns) * p.rs_dimension * p.n
        if self.boundary_subset is None:
            return full
        boundary = sum(
            len(self._boundary_info_positions(i))
            for i in range(p.total_columns)
            if i not in p.full_height_columns
        )
        return full + boundary * p.n

    @property
    def rate(self) -> float:
        return self.info_length / self.params.blocklength

    # -- encoding ------------------------------------------------------------

    def encode(self, info) -> np.ndarray:
        """Encode info bits; accepts (K,) or (B, K), returns matching shape."""
        squeeze = np.asarray(info).ndim == 1
        info = np.atleast_2d(np.asarray(info, dtype=np.uint8)) & 1
        if info.shape[1] != self.info_length:
            raise ValueError(
                f"info length must be {self.info_length}, got {info.shape[1]}"
            )
        p = self.params
        B, N, n, k = info.shape[0], p.N, p.n, p.k
        u = np.zeros((B, n, N, k, N), dtype=np.uint8)  # (trial, copy, row, block, t)
        pos = 0
        for i in range(p.total_columns):
            if i in p.full_height_columns:
                width = p.rs_dimension * n
                msg_bits = info[:, pos : pos + width].reshape(B, p.rs_dimension, n)
                pos += width
                msgs = np.zeros((B, p.rs_dimension), dtype=np.int64)
                for s in range(n):
                    msgs |= msg_bits[:, :, s].astype(np.int64) << s
                codewords = self.rs.encode_batch(msgs)  # (B, N) symbols, row j <- symbol j
                for j in range(N):
                    r, t = divmod(i - j, N)
                    for s in range(n):
                        u[:, s, j, r, t] = (codewords[:, j] >> s) & 1
            else:
                for j, t_polar in self._boundary_info_positions(i):
                    r, t = divmod(i - j, N)
                    for s in range(n):
                        u[:, s, j, r, t] = info[:, pos]
                        pos += 1
        x = polar_transform(u.reshape(B * n * N * k, N))
        x = x.reshape(B, p.blocklength)
        return x[0] if squeeze else x

    # -- decoding ------------------------------------------------------------

    def decode_batch(self, llrs, channel: BmsChannel, exact: bool = True):
        """Decode a batch of observation vectors for a known channel.

        llrs: (B, blocklength) in the serialized bit order.  Returns a
        StaircaseDecodeResult; failures are flagged per trial rather than
        raised.
        """
        p = self.params
        llrs = np.atleast_2d(np.asarray(llrs, dtype=float))
        if llrs.shape[1] != p.blocklength:
            raise ValueError(f"expected {p.blocklength} LLRs, got {llrs.shape[1]}")
        B, N, n, k = llrs.shape[0], p.N, p.n, p.k
        spec = build_spec(channel, p.n, self.design_rate)
        good_mask = spec.good_mask
        blocks_llr = llrs.reshape(B, n, N, k, N)

        info = np.zeros((B, self.info_length), dtype=np.uint8)
        failed = np.zeros(B, dtype=bool)
        first_bad = np.full(B, p.total_columns, dtype=np.int64)
        min_resolved = np.full(B, N, dtype=np.int64)
        decoders: dict[int, SCBatch] = {}
        boundary_subset = (
            set() if self.boundary_subset is None else set(self.boundary_subset.tolist())
        )
        pos = 0
        for i in range(p.total_columns):
            occupancy = column_occupancy(p, i)
            for j, _ in occupancy:
                if (i - j) % N == 0:  # row j starts a new block at this column
                    r = (i - j) // N
                    lanes = blocks_llr[:, :, j, r, :].reshape(B * n, N)
                    decoders[j] = SCBatch(lanes, exact=exact)
            if i in p.full_height_columns:
                pos = self._decode_full_column(
                    i, decoders, good_mask, info, pos, failed, first_bad, min_resolved
                )
            else:
                for j, t_polar in occupancy:
                    dec = decoders[j]
                    if t_polar in boundary_subset:
                        bits, _ = dec.step(None)
                        info[:, pos : pos + n] = bits.reshape(B, n)
                        pos += n
                    else:
                        dec.step(np.zeros(B * n, dtype=np.uint8))
        return StaircaseDecodeResult(
            info=info,
            failed=failed,
            first_bad_column=first_bad,
            min_resolved=min_resolved,
        )

    def _decode_full_column(self, i, decoders, good_mask, info, pos,
                            failed, first_bad, min_resolved):
        p = self.params
        N, n, rs_dim = p.N, p.n, p.rs_dimension
        B = failed.shape[0]
        # Peek every row without committing; (B, n) llr per row.
        llr_rows = np.empty((N, B, n))
        guess_rows = np.empty((N, B, n), dtype=np.uint8)
        good_rows = np.zeros(N, dtype=bool)
        for j in range(N):
            t_polar = (i - j) % N
            good_rows[j] = good_mask[t_polar]
            llr = decoders[j].peek().reshape(B, n)
            llr_rows[j] = llr
            guess_rows[j] = (llr < 0).astype(np.uint8)
        # A symbol is usable when its row is good and no copy is erased.
        resolved = good_rows[:, None] & np.all(llr_rows != 0.0, axis=2)  # (N, B)
        symbols = np.zeros((N, B), dtype=np.int64)
        for s in range(n):
            symbols |= guess_rows[:, :, s].astype(np.int64) << s
        counts = resolved.sum(axis=0)  # per trial
        np.minimum(min_resolved, counts, out=min_resolved)

        filled = np.zeros((B, N), dtype=np.int64)
        messages = np.zeros((B, rs_dim), dtype=np.int64)
        patterns, inverse = np.unique(resolved.T, axis=0, return_inverse=True)
        for pidx in range(patterns.shape[0]):
            trials = np.flatnonzero(inverse == pidx)
            support = np.flatnonzero(patterns[pidx])
            if len(support) < rs_dim:
                newly = trials[~failed[trials]]
                failed[newly] = True
                np.minimum.at(first_bad, newly, i)
                continue
            support = tuple(support[:rs_dim])
            msg_map, fill_map = self.rs.fill_matrices(support)
            y = symbols[list(support)][:, trials]  # (rs_dim, |trials|)
            messages[trials] = self.field.matmul(msg_map, y).T
            filled[trials] = self.field.matmul(fill_map, y).T
        # Inconsistency: a resolved row contradicting the filled codeword.
        mismatch = (filled.T != symbols) & resolved  # (N, B)
        bad = mismatch.any(axis=0) & ~failed
        failed[bad] = True
        np.minimum.at(first_bad, np.flatnonzero(bad), i)
        # Commit one step per row: resolved rows keep their decision, the
        # rest are pinned from the Reed-Solomon fill.
        for j in range(N):
            fill_bits = np.empty((B, n), dtype=np.uint8)
            for s in range(n):
                fill_bits[:, s] = (filled[:, j] >> s) & 1
            own = guess_rows[j]
            use_own = resolved[j][:, None]
            forced = np.where(use_own, own, fill_bits).reshape(B * n)
            decoders[j].step(forced)
        width = rs_dim * n
        msg_bits = np.empty((B, rs_dim, n), dtype=np.uint8)
        for s in range(n):
            msg_bits[:, :, s] = (messages >> s) & 1
        info[:, pos : pos + width] = msg_bits.reshape(B, width)
        return pos + width

    def to_text(self) -> str:
        """Key=value parameter header, one pair per line."""
        lines = [
            "format=staircase-v1",
            f"n={self.params.n}",
            f"k={self.params.k}",
            f"rs_dimension={self.params.rs_dimension}",
            f"design_rate={self.design_rate!r}",
            f"reduction_poly={self.field.reduction_poly}",
        ]
        if self.boundary_subset is None:
            lines.append("boundary=freeze_all")
        else:
            lines.append("boundary=" + ",".join(map(str, self.boundary_subset)))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "StaircaseCode":
        kv = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            kv[key.strip()] = val.strip()
        if kv.get("format") != "staircase-v1":
            raise ValueError("not a staircase parameter header")
        boundary = kv.get("boundary", "freeze_all")
        subset = (
            None
            if boundary == "freeze_all"
            else [int(s) for s in boundary.split(",") if s]
        )
        return cls(
            StaircaseParams(
                n=int(kv["n"]), k=int(kv["k"]), rs_dimension=int(kv["rs_dimension"])
            ),
            design_rate=float(kv["design_rate"]),
            boundary_policy=subset,
            reduction_poly=int(kv["reduction_poly"]),
        )

    def decode(self, llrs, channel: BmsChannel, exact: bool = True) -> np.ndarray:
        """Single-shot decode; raises on column failure.

        UnrecoverableErasure: some column had fewer usable symbols than the
        Reed-Solomon dimension.  DecodingError: a filled column contradicted
        a successfully decoded symbol.
        """
        res = self.decode_batch(np.atleast_2d(llrs), channel, exact=exact)
        if res.failed[0]:
            col = int(res.first_bad_column[0])
            if res.min_resolved[0] < self.params.rs_dimension:
                raise UnrecoverableErasure(
                    f"column {col}: fewer than {self.params.rs_dimension} usable symbols",
                    column=col,
                )
            raise DecodingError(
                f"column {col}: fill contradicts a decoded symbol", column=col
            )
        return res.info[0]


@dataclass
class StaircaseDecodeResult:
    """Batch decode outcome: info bits, per-trial failure flags, the first
    failing column (total_columns when none), and the minimum per-column
    count of usable symbols seen (the erasure-budget diagnostic)."""

    info: np.ndarray
    failed: np.ndarray
    first_bad_column: np.ndarray
    min_resolved: np.ndarray


def s1_encode(info, code: StaircaseCode) -> np.ndarray:
    return code.encode(info)


def s1_decode(llrs, channel: BmsChannel, code: StaircaseCode) -> np.ndarray:
    return code.decode(llrs, channel)


def choose_params(C: float, eps: float, P: float, c: float = 0.0,
                  n_override: int | None = None):
    """Parameter helper: k = ceil(2/eps), n from the universal blocklength
    bound with targets (P*eps/2, eps/2), and Reed-Solomon dimension
    floor((C - eps/2) * N).  Returns (StaircaseParams, report dict).

    ``n_override`` substitutes a desk-scale exponent for the (usually very
    large) bound-derived one while keeping the other formulas."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must be in (0, 1)")
    if not 0.0 < P < 1.0:
        raise ValueError("P must be in (0, 1)")
    k = math.ceil(2.0 / eps)
    n = (
        blocklength_helper(C, eps / 2.0, P * eps / 2.0, c)
        if n_override is None
        else n_override
    )
    N = 1 << n
    rs_dim = int(math.floor((C - eps / 2.0) * N))
    params = StaircaseParams(n=n, k=k, rs_dimension=rs_dim)
    full_cols = len(params.full_height_columns)
    rate = full_cols * rs_dim / (k * N * N)
    report = {
        "k": k,
        "n": n,
        "N": N,
        "rs_dimension": rs_dim,
        "blocklength": params.blocklength,
        "n_blocks": params.n * k * N,
        "rate": rate,
        "rate_floor": C - eps,
    }
    return params, report
