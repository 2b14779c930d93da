import itertools
import math

import numpy as np
import pytest

from unipolar.channels import (
    BmsChannel,
    DominatingSet,
    bhattacharyya,
    capacity,
    degradation_check,
    dominating_set,
    h2,
    h2_inv,
    make_channel,
    parse_channel,
    quantize,
    sample_llrs,
    wasserstein,
)
from unipolar.errors import CapacityLimitError
from unipolar.harness import random_bms_channel


def quad_bawgnc_capacity(sigma):
    """Quadrature oracle for the BAWGNC capacity as a function of sigma."""
    s2 = sigma * sigma
    ys = np.linspace(1 - 12 * sigma, 1 + 12 * sigma, 200001)
    pdf = np.exp(-((ys - 1) ** 2) / (2 * s2)) / math.sqrt(2 * math.pi * s2)
    llr = np.clip(2 * ys / s2, -700, 700)
    return float(np.trapezoid(pdf * (1 - np.log2(1 + np.exp(-llr))), ys))


class TestMakeChannel:
    def test_bec_atoms(self):
        ch = make_channel("bec", 0.5)
        assert ch.atoms == [(0.0, 0.5), (1.0, 0.5)]

    def test_bsc_atom(self):
        ch = make_channel("bsc", 0.11)
        assert len(ch.x) == 1
        assert ch.x[0] == pytest.approx(0.78)

    def test_bawgnc_capacity_half(self):
        # sigma bisected (by the quadrature oracle) to capacity 1/2
        ch = make_channel("bawgnc", 0.97865)
        assert capacity(ch) == pytest.approx(0.5, abs=1e-3)
        assert capacity(ch) == pytest.approx(quad_bawgnc_capacity(0.97865), abs=1e-5)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            make_channel("bec", 1.5)
        with pytest.raises(ValueError):
            make_channel("bsc", 0.6)
        with pytest.raises(ValueError):
            make_channel("bawgnc", 0.0)
        with pytest.raises(ValueError):
            make_channel("laplace", 0.3)

    def test_parse_descriptors(self, tmp_path):
        assert parse_channel("bec:0.5").atoms == [(0.0, 0.5), (1.0, 0.5)]
        assert parse_channel("bsc:0.11").x[0] == pytest.approx(0.78)
        mix = tmp_path / "mix.csv"
        mix.write_text("# x,p\n0.2,0.25\n0.9,0.75\n")
        ch = parse_channel(f"mix:{mix}")
        assert ch.atoms == [(0.2, 0.25), (0.9, 0.75)]
        with pytest.raises(ValueError):
            parse_channel("bec0.5")

    def test_atom_validation(self):
        with pytest.raises(ValueError):
            BmsChannel([0.2, 0.4], [0.7, 0.7])  # mass 1.4
        with pytest.raises(ValueError):
            BmsChannel([1.5], [1.0])


class TestFunctionals:
    def test_bec_capacity(self):
        assert capacity(make_channel("bec", 0.3)) == pytest.approx(0.7, abs=1e-12)

    def test_bsc_capacity(self):
        p = 0.11
        want = 1 - (-p * math.log2(p) - (1 - p) * math.log2(1 - p))
        assert capacity(make_channel("bsc", p)) == pytest.approx(want, abs=1e-12)
        assert want == pytest.approx(0.5000840, abs=1e-6)

    def test_perfect_channel(self):
        assert capacity(BmsChannel([1.0], [1.0])) == 1.0

    def test_bec_bhattacharyya(self):
        for eps in (0.1, 0.5, 0.9):
            assert bhattacharyya(make_channel("bec", eps)) == pytest.approx(eps)

    def test_bsc_bhattacharyya(self):
        p = 0.11
        assert bhattacharyya(make_channel("bsc", p)) == pytest.approx(
            2 * math.sqrt(p * (1 - p)), abs=1e-12
        )
        assert bhattacharyya(make_channel("bsc", p)) == pytest.approx(0.62578, abs=1e-5)

    def test_bms_sandwich(self):
        # 1 - C <= Z and Z^2 <= 1 - C^2 on random mixtures
        rng = np.random.default_rng(10)
        for _ in range(1000):
            ch = random_bms_channel(rng)
            c, z = capacity(ch), bhattacharyya(ch)
            assert z >= 1 - c - 1e-9
            assert z * z <= 1 - c * c + 1e-9

    def test_h2_inv(self):
        assert h2_inv(0.5) == pytest.approx(0.110028, abs=1e-6)
        for y in (0.01, 0.3, 0.77, 0.999):
            assert h2(h2_inv(y)) == pytest.approx(y, abs=1e-10)


class TestWasserstein:
    def test_identity(self):
        ch = make_channel("bsc", 0.2)
        assert wasserstein(ch, ch) == 0.0

    def test_bec_pair(self):
        # CDFs differ by 0.2 on [0, 1)
        assert wasserstein(make_channel("bec", 0.3), make_channel("bec", 0.5)) == (
            pytest.approx(0.2, abs=1e-12)
        )

    def test_triangle_inequality(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            a, b, c = (random_bms_channel(rng) for _ in range(3))
            assert wasserstein(a, c) <= wasserstein(a, b) + wasserstein(b, c) + 1e-12

    def test_symmetry(self):
        rng = np.random.default_rng(12)
        a, b = random_bms_channel(rng), random_bms_channel(rng)
        assert wasserstein(a, b) == pytest.approx(wasserstein(b, a), abs=1e-14)


class TestQuantize:
    def test_fixed_point(self):
        ch = make_channel("bec", 1 / 3)
        g = quantize(ch, 3)
        assert g.units.tolist() == [1, 0, 0, 2]
        assert wasserstein(ch, g.to_channel()) == pytest.approx(0.0, abs=1e-12)

    def test_t3_enumeration_optimal_within_bound(self):
        # enumerate all grid densities at T=3 and check the chosen one is
        # within the 2/T bound of the input
        ch = make_channel("bec", 1 / 3)
        g = quantize(ch, 3)
        d_chosen = wasserstein(ch, g.to_channel())
        assert d_chosen <= 2 / 3 + 1e-12
        best = min(
            wasserstein(ch, _grid_channel(units, 3))
            for units in _all_unit_vectors(3)
        )
        assert d_chosen <= best + 2 / 3

    def test_bound_on_bsc(self):
        ch = make_channel("bsc", 0.11)
        g = quantize(ch, 372)
        assert wasserstein(ch, g.to_channel()) <= 2 / 372 + 1e-12

    def test_bound_randomized(self):
        rng = np.random.default_rng(13)
        for _ in range(1000):
            ch = random_bms_channel(rng)
            T = int(rng.integers(1, 500))
            g = quantize(ch, T)
            assert wasserstein(ch, g.to_channel()) <= 2 / T + 1e-12
            assert np.count_nonzero(g.units) <= T + 1
            assert g.units.sum() == T

    def test_t_validation(self):
        with pytest.raises(ValueError):
            quantize(make_channel("bec", 0.5), 0)


def _all_unit_vectors(T):
    """All compositions of T units into T+1 slots."""
    def rec(left, slots):
        if slots == 1:
            yield (left,)
            return
        for u in range(left + 1):
            for rest in rec(left - u, slots - 1):
                yield (u,) + rest

    yield from rec(T, T + 1)


def _grid_channel(units, T):
    units = np.asarray(units)
    keep = units > 0
    return BmsChannel(np.arange(T + 1)[keep] / T, units[keep] / T)


class TestDegradation:
    def test_bsc_family_ordered(self):
        assert degradation_check(make_channel("bsc", 0.2), make_channel("bsc", 0.1))
        assert not degradation_check(make_channel("bsc", 0.1), make_channel("bsc", 0.2))

    def test_bsc_degraded_wrt_bec(self):
        # explicit stochastic map oracle: erasure -> fair coin
        p = 0.1
        bsc, bec = make_channel("bsc", p), make_channel("bec", 2 * p)
        w_bsc = _transition_matrix(bsc)
        w_bec = _transition_matrix(bec)
        # bec outputs: (atom0=erasure, side0/1), (atom1=perfect, side0/1)
        # map: erasure -> each bsc output w.p. 1/2; perfect -> same side
        phi = np.array([
            [0.5, 0.5],
            [0.5, 0.5],
            [1.0, 0.0],
            [0.0, 1.0],
        ])
        assert np.allclose(w_bec @ phi, w_bsc)
        assert degradation_check(bsc, bec)

    def test_bec_not_degraded_wrt_bsc(self):
        assert not degradation_check(make_channel("bec", 0.3), make_channel("bsc", 0.1))

    def test_reflexive(self):
        rng = np.random.default_rng(14)
        for _ in range(5):
            ch = random_bms_channel(rng)
            assert degradation_check(ch, ch)

    def test_transitive_on_composed_chain(self):
        rng = np.random.default_rng(15)
        for _ in range(5):
            top = random_bms_channel(rng)
            mid = _compose_bsc(top, 0.05)
            low = _compose_bsc(mid, 0.08)
            assert degradation_check(mid, top)
            assert degradation_check(low, mid)
            assert degradation_check(low, top)

    def test_antisymmetry_up_to_equivalence(self):
        a = make_channel("bsc", 0.1)
        b = BmsChannel([0.8], [1.0])  # same channel, constructed differently
        assert degradation_check(a, b) and degradation_check(b, a)
        assert capacity(a) == pytest.approx(capacity(b))


def _transition_matrix(ch):
    """Rows: inputs 0/1; columns: outputs (atom, side)."""
    cols = []
    for x, p in zip(ch.x, ch.p):
        good, bad = p * (1 + x) / 2, p * (1 - x) / 2
        cols.append([good, bad])
        cols.append([bad, good])
    return np.array(cols).T


def _compose_bsc(ch, delta):
    """Degrade by appending a BSC(delta): every atom scales by 1-2*delta."""
    return BmsChannel(np.abs(ch.x * (1 - 2 * delta)), ch.p, ch.label + "+bsc")


class TestDominatingSet:
    def test_lemma_parameters(self):
        fam = dominating_set(0.5, 0.5)
        assert fam.A == 93
        assert fam.T == 372
        assert fam.size_bound == math.comb(186, 93)

    def test_capacity_floor_and_coverage(self):
        rng = np.random.default_rng(16)
        fam = dominating_set(0.5, 0.5)
        for _ in range(60):
            ch = random_bms_channel(rng, min_capacity=0.5)
            member = fam.cover(ch)
            assert member is not None
            assert capacity(member) >= 0.5 - 0.5 - 1e-9
            assert degradation_check(member, ch)
        assert len(fam.members) <= fam.size_bound

    def test_capacity_loss_bounded(self):
        rng = np.random.default_rng(17)
        fam = dominating_set(0.5, 0.25)
        for _ in range(20):
            ch = random_bms_channel(rng, min_capacity=0.5)
            member = fam.representative_for(ch)
            grid = quantize(ch, fam.T).to_channel()
            assert capacity(grid) - capacity(member) <= 0.25 + 1e-9

    def test_eps_too_small(self):
        with pytest.raises(CapacityLimitError):
            dominating_set(0.5, 0.01, T_limit=10000)

    def test_full_enumeration_tiny_grid(self):
        fam = DominatingSet(0.2, 0.9)
        if fam.T <= 6:
            members = fam.enumerate_all()
            assert 0 < len(members) <= math.comb(2 * fam.T, fam.T)
            for m in members:
                assert capacity(m) >= 0.2 - 0.9 - 1e-9


class TestSampling:
    def test_bec_llrs(self):
        rng = np.random.default_rng(18)
        ch = make_channel("bec", 0.5)
        bits = rng.integers(0, 2, 20000, dtype=np.uint8)
        llrs = sample_llrs(ch, bits, rng)
        erased = llrs == 0
        assert erased.mean() == pytest.approx(0.5, abs=0.02)
        # non-erased LLRs are certain and correct
        assert np.all(np.isinf(llrs[~erased]))
        assert np.all((llrs[~erased] > 0) == (bits[~erased] == 0))

    def test_bsc_llrs(self):
        rng = np.random.default_rng(19)
        p = 0.11
        ch = make_channel("bsc", p)
        bits = np.zeros(50000, dtype=np.uint8)
        llrs = sample_llrs(ch, bits, rng)
        mag = math.log((1 - p) / p)
        assert np.allclose(np.abs(llrs), mag)
        assert (llrs < 0).mean() == pytest.approx(p, abs=0.005)
