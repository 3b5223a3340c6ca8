import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abfold import (AbSequence, MonomerClass, SequenceError,
                    angles_from_direction, compute_positions,
                    direction_from_angles, energy_auxiliary, energy_original,
                    kd_transform, local_movement, pair_coefficient,
                    parse_ab_sequence, wrap_angle)
from abfold.formats import parse_conformation

from conftest import brute_energy, brute_positions, conformation_text

angle = st.floats(-math.pi, math.pi, exclude_min=True)


def random_conf(rng, n_mono):
    return rng.uniform(-math.pi, math.pi, 2 * n_mono - 5)


# sequences

def test_parse_f13():
    seq = parse_ab_sequence("ABBABBABABBAB")
    assert len(seq) == 13 and seq.dimension == 21
    assert str(seq) == "ABBABBABABBAB"


def test_parse_case_folding():
    assert parse_ab_sequence("aba").residues == (
        MonomerClass.A, MonomerClass.B, MonomerClass.A)


def test_parse_rejects_with_offset():
    with pytest.raises(SequenceError) as exc:
        parse_ab_sequence("ABX")
    assert exc.value.offset == 3


def test_parse_header_and_whitespace():
    seq = parse_ab_sequence(">demo\nAB B\nA\n")
    assert str(seq) == "ABBA"


def test_too_short():
    with pytest.raises(SequenceError):
        parse_ab_sequence("AB")


def test_kd_transform():
    assert str(kd_transform("IVPLCMAG")) == "AAAAAAAA"
    assert str(kd_transform("DEHFKNQRSTWY")) == "BBBBBBBBBBBB"
    assert str(kd_transform("ivpd")) == "AAAB"
    with pytest.raises(SequenceError):
        kd_transform("XZ")


# angles

def test_wrap_examples():
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(4.0) == pytest.approx(4.0 - 2 * math.pi, abs=1e-15)
    with pytest.raises(ValueError):
        wrap_angle(math.inf)


@given(st.floats(-1e6, 1e6))
def test_wrap_range_and_congruence(x):
    y = wrap_angle(x)
    assert -math.pi < y <= math.pi
    k = (x - y) / (2 * math.pi)
    assert abs(k - round(k)) < 1e-9
    assert wrap_angle(y) == y


# geometry

def test_positions_small_examples():
    p = compute_positions([math.radians(30)])
    assert p[2] == pytest.approx([0.8660254, 1.5, 0.0], abs=1e-7)
    p = compute_positions([math.radians(30), math.radians(-60), math.radians(45)])
    assert p[3] == pytest.approx([1.2195788, 0.8876276, 0.7071068], abs=1e-7)
    p = compute_positions([0.0, 0.0, 0.0])
    assert np.allclose(p, [[0, 0, 0], [0, 1, 0], [1, 1, 0], [2, 1, 0]])


@settings(max_examples=200)
@given(st.integers(3, 60), st.integers(0, 2 ** 32 - 1))
def test_positions_match_oracle_and_unit_bonds(n_mono, seed):
    conf = random_conf(np.random.default_rng(seed), n_mono)
    pts = compute_positions(conf)
    assert np.allclose(pts, brute_positions(conf), atol=1e-12)
    bonds = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    assert np.all(np.abs(bonds - 1) <= 1e-12)
    assert pts[2, 2] == 0.0


def test_bond_lengths_many_random_chains():
    rng = np.random.default_rng(7)
    for n_mono in (13, 21, 34, 55):
        for _ in range(2500):
            pts = compute_positions(random_conf(rng, n_mono))
            bonds = np.linalg.norm(np.diff(pts, axis=0), axis=1)
            assert np.max(np.abs(bonds - 1)) <= 1e-12


def test_pair_coefficient():
    A, B = MonomerClass.A, MonomerClass.B
    assert pair_coefficient(A, A) == 1.0
    assert pair_coefficient(B, B) == 0.5
    assert pair_coefficient(A, B) == -0.5
    for a in (A, B):
        for b in (A, B):
            assert pair_coefficient(a, b) == pair_coefficient(b, a)


# energies

def test_energy_hand_values():
    e = energy_original(parse_ab_sequence("AAA"), [math.pi / 2])
    assert e.e_bb == pytest.approx(0.25, abs=1e-15)
    assert e.e_lj == pytest.approx(-0.0615234375, abs=1e-15)
    assert e.e_o == pytest.approx(0.1884765625, abs=1e-15)
    assert e.e_hc is None and e.e_x is None
    e = energy_original(parse_ab_sequence("ABB"), [math.pi / 2])
    assert e.e_o == pytest.approx(0.2822265625, abs=1e-15)


def test_auxiliary_hand_values():
    e = energy_auxiliary(parse_ab_sequence("AAA"), [math.pi / 2])
    assert e.e_hc == pytest.approx(2.0, abs=1e-15)
    assert e.e_x == pytest.approx(1002.1884765625, abs=1e-12)
    assert e.n_hydrophobic == 3
    assert e.centroid == pytest.approx((0.0, 1.0, 0.0), abs=1e-15)


@given(angle)
def test_auxiliary_degenerate_core(t):
    assert energy_auxiliary(parse_ab_sequence("ABB"), [t]).e_hc == 0.0
    e = energy_auxiliary(parse_ab_sequence("BBB"), [t])
    assert e.e_hc == 0.0 and e.centroid is None
    assert e.e_x == (e.e_o + 0.0) + 1000.0


def test_auxiliary_rejects_negative_lambda():
    with pytest.raises(ValueError):
        energy_auxiliary(parse_ab_sequence("AAA"), [0.0], -1.0)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        energy_original(parse_ab_sequence("AAAA"), [0.0])


def test_all_zero_bend_energy():
    seq = parse_ab_sequence("ABABAB")
    assert energy_original(seq, np.zeros(seq.dimension)).e_bb == 0.0


@settings(max_examples=150)
@given(st.text(alphabet="AB", min_size=3, max_size=40),
       st.integers(0, 2 ** 32 - 1), st.floats(0, 5000))
def test_energies_match_oracle(text, seed, lam):
    seq = parse_ab_sequence(text)
    conf = random_conf(np.random.default_rng(seed), len(seq))
    e = energy_auxiliary(seq, conf, lam)
    bb, lj, hc = brute_energy(text, conf)
    assert e.e_bb == pytest.approx(bb, rel=1e-12, abs=1e-12)
    assert e.e_lj == pytest.approx(lj, rel=1e-9, abs=1e-9)
    assert e.e_hc == pytest.approx(hc, rel=1e-12, abs=1e-12)
    assert e.e_bb >= 0 and e.e_hc >= 0
    assert e.e_o == e.e_bb + e.e_lj
    assert e.e_x == (e.e_o + e.e_hc) + lam


@pytest.mark.parametrize("label,score", [
    ("F13", 6.9961), ("1BXP", 5.6104), ("1CB3", 8.4589),
    ("1BXL", 17.3962), ("1EDP", 15.0092), ("2ZNF", 18.3402)])
def test_published_conformations_reach_best_known(label, score, sequence_table):
    text = sequence_table[label][2]
    seq = parse_ab_sequence(text)
    conf = parse_conformation(conformation_text(label), seq)
    e = energy_original(seq, conf)
    assert -e.e_o == pytest.approx(score, abs=0.05)
    bb, lj, _ = brute_energy(text, conf)
    assert e.e_o == pytest.approx(bb + lj, rel=1e-12)


# directions

def test_direction_examples():
    assert np.allclose(direction_from_angles(0, 0), [1, 0, 0])
    assert np.allclose(direction_from_angles(math.pi / 2, 0), [0, 1, 0], atol=1e-16)
    v = direction_from_angles(math.radians(30), math.radians(45))
    assert v == pytest.approx([0.6123724, 0.3535534, 0.7071068], abs=1e-7)


def test_angles_from_direction_examples():
    assert angles_from_direction([1, 0, 0]) == pytest.approx((0, 0))
    assert angles_from_direction([0, 0, 1], 0.7) == pytest.approx((0.7, math.pi / 2))
    t, b = angles_from_direction(direction_from_angles(math.radians(30),
                                                       math.radians(45)))
    assert (math.degrees(t), math.degrees(b)) == pytest.approx((30, 45))
    with pytest.raises(ValueError):
        angles_from_direction([2, 0, 0])


def test_direction_round_trip_bulk():
    rng = np.random.default_rng(11)
    v = rng.normal(size=(100_000, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    worst = 0.0
    for row in v:
        back = direction_from_angles(*angles_from_direction(row))
        worst = max(worst, float(np.max(np.abs(back - row))))
    assert worst <= 1e-9


@given(angle, angle)
def test_direction_is_unit(t, b):
    assert abs(np.linalg.norm(direction_from_angles(t, b)) - 1) <= 1e-12


# local movement

def _move_case(rng, n_mono):
    seq = AbSequence(tuple(rng.choice([MonomerClass.A, MonomerClass.B], n_mono)))
    conf = random_conf(rng, n_mono)
    return seq, conf, compute_positions(conf), energy_original(seq, conf)


def test_identity_move():
    rng = np.random.default_rng(3)
    seq, conf, chain, e = _move_case(rng, 13)
    for n in range(2, 13):
        out = local_movement(seq, conf, chain, e, n, 0.0, 0.0)
        assert out.feasible
        assert np.allclose(out.chain, chain, atol=1e-12)
        assert out.breakdown.e_o == pytest.approx(e.e_o, abs=1e-12 * (1 + abs(e.e_o)))


def test_last_bond_always_feasible():
    rng = np.random.default_rng(4)
    for _ in range(200):
        seq, conf, chain, e = _move_case(rng, 13)
        out = local_movement(seq, conf, chain, e, 12, *rng.uniform(-3, 3, 2))
        assert out.feasible and out.moved_monomers == {13}


def test_torsion_delta_ignored_at_n2():
    rng = np.random.default_rng(5)
    seq, conf, chain, e = _move_case(rng, 13)
    a = local_movement(seq, conf, chain, e, 2, 0.3, 0.0)
    b = local_movement(seq, conf, chain, e, 2, 0.3, 1.1)
    assert a.feasible == b.feasible
    assert np.array_equal(a.conformation, b.conformation)


def test_bad_index():
    rng = np.random.default_rng(6)
    seq, conf, chain, e = _move_case(rng, 13)
    with pytest.raises(ValueError):
        local_movement(seq, conf, chain, e, 13, 0.1, 0.1)


@settings(max_examples=300, deadline=None)
@given(st.integers(4, 40), st.integers(0, 2 ** 32 - 1), st.data())
def test_local_move_properties(n_mono, seed, data):
    rng = np.random.default_rng(seed)
    seq, conf, chain, e = _move_case(rng, n_mono)
    n = data.draw(st.integers(2, n_mono - 1))
    dt = data.draw(st.floats(-math.pi, math.pi))
    db = data.draw(st.floats(-math.pi, math.pi))
    out = local_movement(seq, conf, chain, e, n, dt, db)
    if not out.feasible:
        assert np.array_equal(out.conformation, conf)
        return
    assert len(out.moved_monomers) <= 2
    assert np.all(np.abs(out.conformation) <= math.pi)
    assert np.all(out.conformation > -math.pi)
    # chain and angles agree
    assert np.allclose(compute_positions(out.conformation), out.chain, atol=1e-9)
    still = [k for k in range(n_mono) if k + 1 not in out.moved_monomers]
    assert np.max(np.abs(out.chain[still] - chain[still])) <= 1e-12
    bonds = np.linalg.norm(np.diff(out.chain, axis=0), axis=1)
    assert np.max(np.abs(bonds - 1)) <= 1e-12
    full = energy_original(seq, out.conformation).e_o
    assert abs(out.breakdown.e_o - full) <= 1e-9 * (1 + abs(full))
