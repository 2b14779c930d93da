"""Binary-input memoryless output-symmetric (BMS) channel machinery.

A BMS channel is represented by its discrete D-density: a finite list of
atoms (x_i, p_i) with x_i in [0, 1].  Atom x corresponds to a BSC component
with crossover (1 - x)/2, so the channel is a probability mixture of BSCs.
Capacities, Bhattacharyya parameters, Wasserstein distances, degradation
tests, grid quantization and the dominating-set construction all operate on
this representation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import CapacityLimitError

_ATOL = 1e-12


def h2(x):
    """Binary entropy in bits, elementwise, with h2(0) = h2(1) = 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inner = (x > 0) & (x < 1)
    xi = x[inner]
    out[inner] = -xi * np.log2(xi) - (1 - xi) * np.log2(1 - xi)
    return out if out.ndim else float(out)


def h2_inv(y: float) -> float:
    """Inverse of h2 on [0, 1/2], by bisection to 1e-12."""
    if not 0.0 <= y <= 1.0:
        raise ValueError(f"h2_inv argument must be in [0, 1], got {y}")
    lo, hi = 0.0, 0.5
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if h2(mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class BmsChannel:
    """A BMS channel as a discrete D-density.

    Parameters
    ----------
    x : array-like
        Atom locations in [0, 1].  Duplicates are merged; output is sorted.
    p : array-like
        Atom masses, nonnegative, summing to 1 within 1e-12.
    label : str
        Human-readable descriptor, e.g. "bsc:0.11".
    """

    def __init__(self, x, p, label: str = "bms"):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        if x.shape != p.shape or x.ndim != 1 or x.size == 0:
            raise ValueError("x and p must be equal-length 1-d arrays")
        if np.any((x < -_ATOL) | (x > 1 + _ATOL)):
            raise ValueError("atom locations must lie in [0, 1]")
        if np.any(p < -_ATOL):
            raise ValueError("atom masses must be nonnegative")
        total = p.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"atom masses must sum to 1, got {total}")
        order = np.argsort(x)
        x, p = np.clip(x[order], 0.0, 1.0), p[order] / total
        # Merge coincident atoms so locations are strictly increasing.
        keep_x, keep_p = [x[0]], [p[0]]
        for xi, pi in zip(x[1:], p[1:]):
            if xi - keep_x[-1] <= _ATOL:
                keep_p[-1] += pi
            else:
                keep_x.append(xi)
                keep_p.append(pi)
        self.x = np.array(keep_x)
        self.p = np.array(keep_p)
        self.x.flags.writeable = False
        self.p.flags.writeable = False
        self.label = label

    @property
    def atoms(self):
        return list(zip(self.x.tolist(), self.p.tolist()))

    def __repr__(self):
        return f"BmsChannel({self.label!r}, {len(self.x)} atoms)"


def make_channel(kind: str, param: float, awgn_atoms: int = 2048) -> BmsChannel:
    """Build a named BMS channel.

    kind "bec": param is the erasure probability in [0, 1].
    kind "bsc": param is the crossover probability in [0, 1/2].
    kind "bawgnc": param is the noise standard deviation sigma > 0; the
    continuous D-density is discretized to ``awgn_atoms`` atoms by
    mass-preserving binning (the only approximation in this module).
    """
    kind = kind.lower()
    if kind == "bec":
        if not 0.0 <= param <= 1.0:
            raise ValueError("BEC erasure probability must be in [0, 1]")
        if param == 0.0:
            return BmsChannel([1.0], [1.0], "bec:0")
        if param == 1.0:
            return BmsChannel([0.0], [1.0], "bec:1")
        return BmsChannel([0.0, 1.0], [param, 1.0 - param], f"bec:{param:g}")
    if kind == "bsc":
        if not 0.0 <= param <= 0.5:
            raise ValueError("BSC crossover must be in [0, 1/2]")
        return BmsChannel([1.0 - 2.0 * param], [1.0], f"bsc:{param:g}")
    if kind == "bawgnc":
        if param <= 0.0:
            raise ValueError("BAWGNC noise sigma must be positive")
        x, p = _bawgnc_atoms(param, awgn_atoms)
        return BmsChannel(x, p, f"bawgnc:{param:g}")
    raise ValueError(f"unknown channel kind {kind!r}")


def _bawgnc_atoms(sigma: float, n_atoms: int):
    # BPSK +-1 with N(0, sigma^2) noise; by symmetry condition on +1.
    # D = |tanh(y / sigma^2)| for the channel output y ~ N(1, sigma^2).
    # P(D <= d) = Phi((a-1)/sigma) - Phi((-a-1)/sigma), a = sigma^2 atanh(d).
    def cdf(d):
        if d >= 1.0:
            return 1.0
        if d <= 0.0:
            return 0.0
        a = sigma * sigma * math.atanh(d)
        q = 1.0 / (sigma * math.sqrt(2.0))
        return 0.5 * (math.erf((a - 1.0) * q) - math.erf((-a - 1.0) * q))

    edges = np.linspace(0.0, 1.0, n_atoms + 1)
    cum = np.array([cdf(d) for d in edges])
    masses = np.diff(cum)
    centers = 0.5 * (edges[:-1] + edges[1:])
    keep = masses > 1e-300
    masses = masses[keep]
    centers = centers[keep]
    return centers, masses / masses.sum()


def parse_channel(descriptor: str, awgn_atoms: int = 2048) -> BmsChannel:
    """Parse a channel descriptor: "bec:0.5", "bsc:0.11", "bawgnc:0.97865",
    or "mix:<path>" where <path> is a CSV file of x,p atom rows."""
    if ":" not in descriptor:
        raise ValueError(f"malformed channel descriptor {descriptor!r}")
    kind, _, arg = descriptor.partition(":")
    kind = kind.strip().lower()
    if kind == "mix":
        xs, ps = [], []
        with open(arg, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                xs.append(float(row[0]))
                ps.append(float(row[1]))
        return BmsChannel(xs, ps, descriptor)
    return make_channel(kind, float(arg), awgn_atoms=awgn_atoms)


def capacity(ch: BmsChannel) -> float:
    """C = 1 - sum_i p_i h2((1 - x_i)/2), in bits per use."""
    return float(1.0 - np.sum(ch.p * h2((1.0 - ch.x) / 2.0)))


def bhattacharyya(ch: BmsChannel) -> float:
    """Z = sum_i p_i sqrt(1 - x_i^2)."""
    return float(np.sum(ch.p * np.sqrt(np.maximum(0.0, 1.0 - ch.x**2))))


def wasserstein(a: BmsChannel, b: BmsChannel) -> float:
    """Order-1 Wasserstein distance: the L1 distance between the two
    cumulative mass functions on [0, 1]."""
    grid = np.union1d(a.x, b.x)
    ca = np.concatenate(([0.0], np.cumsum(a.p)))
    cb = np.concatenate(([0.0], np.cumsum(b.p)))
    fa = ca[np.searchsorted(a.x, grid, side="right")]
    fb = cb[np.searchsorted(b.x, grid, side="right")]
    # CDFs are step functions; they agree (=1) beyond the last atom.
    widths = np.diff(np.append(grid, 1.0))
    return float(np.sum(np.abs(fa - fb) * widths))


@dataclass(frozen=True)
class GridDensity:
    """A density on the grid {0, 1/T, ..., 1} with masses in multiples of 1/T.

    ``units`` holds integer multiples of 1/T per grid point and sums to T.
    """

    T: int
    units: np.ndarray

    def __post_init__(self):
        units = np.asarray(self.units, dtype=np.int64)
        if units.shape != (self.T + 1,) or units.sum() != self.T or np.any(units < 0):
            raise ValueError("units must be T+1 nonnegative integers summing to T")
        units.flags.writeable = False
        object.__setattr__(self, "units", units)

    @property
    def masses(self) -> np.ndarray:
        return self.units / self.T

    def to_channel(self, label: str | None = None) -> BmsChannel:
        keep = self.units > 0
        xs = np.arange(self.T + 1)[keep] / self.T
        ps = self.units[keep] / self.T
        return BmsChannel(xs, ps, label or f"grid:T={self.T}")


def quantize(ch: BmsChannel, T: int) -> GridDensity:
    """Nearest grid density: atom locations round to the nearest multiple of
    1/T, then masses round to multiples of 1/T by rounding the cumulative
    mass function (which keeps the Wasserstein distance within 2/T: at most
    1/(2T) from moving locations plus 1/(2T) from perturbing the CDF)."""
    if T < 1:
        raise ValueError("grid resolution T must be >= 1")
    slots = np.floor(ch.x * T + 0.5).astype(np.int64)
    mass = np.zeros(T + 1)
    np.add.at(mass, slots, ch.p)
    cum_units = np.floor(np.cumsum(mass) * T + 0.5).astype(np.int64)
    cum_units[-1] = T
    units = np.diff(np.concatenate(([0], cum_units)))
    return GridDensity(T, units)


# -- degradation ----------------------------------------------------------


def _transition_rows(ch: BmsChannel):
    """P(y | input 0) over the 2*m outputs (atom i, side s); side 0 is the
    likelier symbol under input 0."""
    good = ch.p * (1.0 + ch.x) / 2.0
    bad = ch.p * (1.0 - ch.x) / 2.0
    return good, bad


def degradation_check(a: BmsChannel, b: BmsChannel, tol: float = 1e-9) -> bool:
    """True iff ``a`` is degraded with respect to ``b`` (a = b followed by
    some stochastic map), decided by linear feasibility over the channels'
    BSC-mixture transition matrices.

    Both channels are output-symmetric, so the map may be assumed symmetric,
    which halves the variable count.  Exact for discrete channels up to the
    LP solver tolerance.
    """
    ma, mb = len(a.x), len(b.x)
    good_a, bad_a = _transition_rows(a)
    good_b, bad_b = _transition_rows(b)
    # Variables phi[j, i, s]: P(map emits a-output (i, s) | b-output (j, 0)),
    # extended by symmetry to (j, 1).  Flattened index ((j * ma) + i) * 2 + s.
    nvar = mb * ma * 2
    rows, cols, vals = [], [], []
    rhs = []
    r = 0
    # Composition constraints: for each a-output (i, s),
    #   sum_j [ good_b[j] phi[j,i,s] + bad_b[j] phi[j,i,1-s] ] = P_a((i,s)|0)
    for i in range(ma):
        for s in (0, 1):
            for j in range(mb):
                rows.append(r)
                cols.append((j * ma + i) * 2 + s)
                vals.append(good_b[j])
                rows.append(r)
                cols.append((j * ma + i) * 2 + (1 - s))
                vals.append(bad_b[j])
            rhs.append(good_a[i] if s == 0 else bad_a[i])
            r += 1
    # Row-stochasticity: sum_{i,s} phi[j,i,s] = 1 per b-output j.
    for j in range(mb):
        for i in range(ma):
            for s in (0, 1):
                rows.append(r)
                cols.append((j * ma + i) * 2 + s)
                vals.append(1.0)
        rhs.append(1.0)
        r += 1
    a_eq = sparse.coo_matrix((vals, (rows, cols)), shape=(r, nvar)).tocsc()
    res = linprog(
        c=np.zeros(nvar),
        A_eq=a_eq,
        b_eq=np.array(rhs),
        bounds=(0.0, 1.0),
        method="highs",
        options={
            "primal_feasibility_tolerance": tol,
            "dual_feasibility_tolerance": tol,
        },
    )
    return res.status == 0


# -- dominating sets ------------------------------------------------------


@dataclass
class ChannelFamily:
    """A finite family of BMS channels with a common capacity target."""

    members: list
    target_capacity: float


class DominatingSet(ChannelFamily):
    """Finite family dominating all BMS channels of capacity >= C.

    Representatives are materialized lazily: ``cover(ch)`` quantizes ``ch``
    to the T-grid, lowers every atom by the degradation shift, and returns
    the resulting member (every channel within the quantization radius of
    the same grid density is upgraded with respect to it; validated
    statistically, not proven).  ``enumerate_all()`` materializes the whole
    grid for small T.

    Attributes
    ----------
    eps : float
        Allowed capacity loss of the representatives.
    A, T : int
        Grid parameters ceil(9 / (8 h2_inv(eps)^2)) and
        ceil(9 / (2 h2_inv(eps)^2)).
    size_bound : int
        The binomial bound C(2A, A) on the family size.
    shift : float
        Amount by which representative atoms are lowered.
    """

    def __init__(self, C: float, eps: float, T_limit: int = 1_000_000):
        if not 0.0 < C < 1.0:
            raise ValueError("capacity target must be in (0, 1)")
        if not 0.0 < eps < 1.0:
            raise ValueError("eps must be in (0, 1)")
        u = h2_inv(eps)
        self.eps = eps
        self.A = math.ceil(9.0 / (8.0 * u * u))
        self.T = math.ceil(9.0 / (2.0 * u * u))
        if self.T > T_limit:
            raise CapacityLimitError(
                f"eps={eps:g} needs grid resolution T={self.T} > limit {T_limit}; "
                "raise T_limit or use a larger eps"
            )
        self.size_bound = math.comb(2 * self.A, self.A)
        # Quantization keeps channels within radius (4/9) h2_inv(eps)^2;
        # lowering atoms by 3 sqrt(radius) = 2 h2_inv(eps) costs at most
        # h2(h2_inv(eps)) = eps of capacity while forcing degradedness.
        self.radius = 4.0 / 9.0 * u * u
        self.shift = 3.0 * math.sqrt(self.radius)
        super().__init__(members=[], target_capacity=C)
        self._seen: dict[tuple, int] = {}

    def representative_for(self, ch: BmsChannel) -> BmsChannel:
        grid = quantize(ch, self.T)
        shifted_x = np.maximum(0.0, np.arange(self.T + 1) / self.T - self.shift)
        keep = grid.units > 0
        return BmsChannel(
            shifted_x[keep],
            grid.units[keep] / self.T,
            label=f"dominating(T={self.T})",
        )

    def cover(self, ch: BmsChannel) -> BmsChannel | None:
        """Materialize (or look up) the member covering ``ch``.

        Returns None when the shifted representative falls below the
        capacity floor C - eps, which cannot happen for inputs of capacity
        >= C; such representatives are discarded rather than kept.
        """
        member = self.representative_for(ch)
        if capacity(member) < self.target_capacity - self.eps - 1e-9:
            return None
        key = (tuple(member.x.tolist()), tuple(member.p.tolist()))
        idx = self._seen.get(key)
        if idx is None:
            self._seen[key] = len(self.members)
            self.members.append(member)
        else:
            member = self.members[idx]
        return member

    def enumerate_all(self, max_count: int = 500_000):
        """Materialize every grid density (shifted, capacity-filtered).

        Only feasible for tiny T; guarded by ``max_count``.
        """
        total = math.comb(2 * self.T, self.T)
        if total > max_count:
            raise CapacityLimitError(
                f"full enumeration would produce {total} densities > {max_count}"
            )
        shifted_x = np.maximum(0.0, np.arange(self.T + 1) / self.T - self.shift)

        def compositions(units_left, slots):
            if slots == 1:
                yield (units_left,)
                return
            for u in range(units_left + 1):
                for rest in compositions(units_left - u, slots - 1):
                    yield (u,) + rest

        out = []
        for units in compositions(self.T, self.T + 1):
            units = np.array(units, dtype=np.int64)
            keep = units > 0
            member = BmsChannel(
                shifted_x[keep], units[keep] / self.T, label=f"grid(T={self.T})"
            )
            if capacity(member) >= self.target_capacity - self.eps - 1e-9:
                out.append(member)
        return out


def dominating_set(C: float, eps: float, T_limit: int = 1_000_000) -> DominatingSet:
    """Construct the (lazily materialized) dominating family for all BMS
    channels of capacity >= C, with per-member capacity >= C - eps."""
    return DominatingSet(C, eps, T_limit=T_limit)


# -- simulation ------------------------------------------------------------


def llr_magnitudes(ch: BmsChannel) -> np.ndarray:
    """Per-atom LLR magnitude 2 atanh(x); +inf for x = 1."""
    with np.errstate(divide="ignore"):
        return 2.0 * np.arctanh(ch.x)


def sample_llrs(ch: BmsChannel, bits: np.ndarray, rng: np.random.Generator):
    """Simulate transmission of ``bits`` (0/1 array) and return LLRs.

    Each use samples an atom x_i of the D-density and then a BSC with
    crossover (1 - x_i)/2; the emitted LLR is +-2 atanh(x_i), negative when
    the received hard symbol is 1.  Exact for the discrete channel model.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    cum = np.cumsum(ch.p)
    cum[-1] = 1.0
    atom_idx = np.searchsorted(cum, rng.random(bits.shape), side="right")
    x = ch.x[atom_idx]
    flip = rng.random(bits.shape) < (1.0 - x) / 2.0
    received = bits ^ flip
    mags = llr_magnitudes(ch)[atom_idx]
    return np.where(received == 0, mags, -mags)
