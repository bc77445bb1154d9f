import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from ecap.core import IGNORE, FormatError
from ecap.memory_bank import (
    BankSet,
    EmptyBankError,
    MemoryBank,
    bank_from_bytes,
    bank_to_bytes,
    extract_class_samples,
    insert,
    load_bank,
    save_bank,
    top_n_distribution,
)
from ecap.pseudo_label import generate_pseudo_label
from helpers import make_entry


def _teacher_for(cls, C, conf=0.9):
    probs = np.full(cls.shape + (C,), (1 - conf) / (C - 1))
    rows, cols = np.indices(cls.shape)
    probs[rows, cols, cls] = conf
    return generate_pseudo_label(probs)


def test_extract_single_class():
    cls = np.full((4, 4), 2)
    entries = extract_class_samples(np.random.default_rng(0).random((4, 4, 3)), _teacher_for(cls, 4))
    assert len(entries) == 1
    assert entries[0].class_id == 2
    assert entries[0].confidence == pytest.approx(0.9)


def test_extract_one_entry_per_present_class():
    cls = np.zeros((6, 6), int)
    cls[:2, :2] = 3
    cls[4:, 4:] = 7
    x = np.random.default_rng(1).random((6, 6, 3))
    entries = extract_class_samples(x, _teacher_for(cls, 8), image_id=5)
    assert sorted(e.class_id for e in entries) == [0, 3, 7]
    for e in entries:
        m = cls == e.class_id
        assert np.all(e.image[~m] == 0.0)
        np.testing.assert_array_equal(e.image[m], x[m].astype(np.float32))
        np.testing.assert_array_equal(e.label.sum(axis=-1), m)
        assert np.all(e.label[m][:, e.class_id] == 1)
        assert e.image_id == 5


def test_extract_confidence_is_class_mean():
    rng = np.random.default_rng(2)
    probs = rng.dirichlet(np.ones(3), (5, 5))
    teacher = generate_pseudo_label(probs)
    for e in extract_class_samples(rng.random((5, 5, 3)), teacher):
        sel = teacher.class_map == e.class_id
        assert e.confidence == pytest.approx(probs[..., e.class_id][sel].mean(), abs=1e-15)


def test_extract_carries_masked_truth():
    cls = np.array([[0, 1], [1, 1]])
    truth = np.array([[0, 0], [1, 2]])
    entries = extract_class_samples(np.zeros((2, 2, 3)), _teacher_for(cls, 3), truth=truth)
    e1 = [e for e in entries if e.class_id == 1][0]
    np.testing.assert_array_equal(e1.truth, [[IGNORE, 0], [1, 2]])


def test_insert_deduplicates_per_image():
    bs = BankSet(4)
    insert(bs, [make_entry(1, 0.5, image_id=7)], 7)
    assert len(bs[1]) == 1
    newer = make_entry(1, 0.6, image_id=7)
    insert(bs, [newer], 7)
    assert len(bs[1]) == 1
    assert bs[1].entries[0] is newer
    insert(bs, [make_entry(1, 0.4, image_id=8)], 8)
    assert len(bs[1]) == 2


def test_insert_rejects_wrong_image_id():
    with pytest.raises(ValueError):
        insert(BankSet(4), [make_entry(1, 0.5, image_id=3)], 4)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 5), st.floats(0, 1)), max_size=40))
def test_dedup_invariant_under_any_interleaving(ops):
    bs = BankSet(4)
    for c, img, q in ops:
        insert(bs, [make_entry(c, q, img, size=(3, 3))], img)
        for bank in bs:
            ids = [e.image_id for e in bank.entries]
            assert len(ids) == len(set(ids))
            assert all(e.class_id == bank.class_id for e in bank.entries)


def _bank(confs):
    return MemoryBank(0, [make_entry(0, q, i, size=(2, 2)) for i, q in enumerate(confs)])


def test_top_n_examples():
    np.testing.assert_array_equal(top_n_distribution(_bank([0.9, 0.8, 0.7]), 2), [0.5, 0.5, 0])
    np.testing.assert_array_equal(top_n_distribution(_bank([0.3, 0.8]), 5), [0.5, 0.5])
    # tie at the boundary: older entry wins
    np.testing.assert_array_equal(top_n_distribution(_bank([0.9, 0.5, 0.5]), 2), [0.5, 0.5, 0])
    with pytest.raises(EmptyBankError):
        top_n_distribution(MemoryBank(0), 3)


def _top_n_oracle(confs, n):
    # direct reading: 1/n for every entry at or above the n-th largest score
    k = min(n, len(confs))
    threshold = sorted(confs, reverse=True)[k - 1]
    return [1.0 / k if q >= threshold else 0.0 for q in confs]


@settings(max_examples=200)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=30, unique=True), st.integers(1, 40))
def test_top_n_matches_definition_without_ties(confs, n):
    np.testing.assert_allclose(top_n_distribution(_bank(confs), n), _top_n_oracle(confs, n))


@settings(max_examples=200)
@given(st.lists(st.sampled_from([0.1, 0.5, 0.5, 0.9, 1.0]), min_size=1, max_size=20),
       st.integers(1, 25))
def test_top_n_sums_to_one_and_zeroes_below_order_statistic(confs, n):
    p = top_n_distribution(_bank(confs), n)
    assert abs(p.sum() - 1.0) <= 1e-12
    k = min(n, len(confs))
    nth = sorted(confs, reverse=True)[k - 1]
    for q, pi in zip(confs, p):
        if q < nth:
            assert pi == 0.0
        if q > nth:
            assert pi == 1.0 / k


def test_top_n_empirical_frequencies():
    confs = [0.2, 0.9, 0.5, 0.8, 0.95, 0.1]
    p = top_n_distribution(_bank(confs), 3)
    rng = np.random.default_rng(11)
    counts = np.bincount(rng.choice(len(confs), size=10_000, p=p), minlength=len(confs))
    live = p > 0
    assert counts[~live].sum() == 0
    assert chisquare(counts[live], 10_000 * p[live]).pvalue > 0.001


def _sample_bankset():
    bs = BankSet(3, enabled=[True, False, True])
    rng = np.random.default_rng(5)
    for img in range(3):
        insert(bs, [make_entry(0, rng.random(), img, num_classes=3, rng=rng),
                    make_entry(2, rng.random(), img, num_classes=3, rng=rng)], img)
    return bs


def test_bank_round_trip_bit_exact(tmp_path):
    bs = _sample_bankset()
    path = tmp_path / "bank.bin"
    save_bank(bs, path)
    back = load_bank(path)
    assert back == bs
    assert back.enabled == [True, False, True]
    assert [e.image_id for e in back[0].entries] == [e.image_id for e in bs[0].entries]
    assert bank_to_bytes(back) == bank_to_bytes(bs)


def test_empty_bank_round_trip(tmp_path):
    path = tmp_path / "empty.bin"
    save_bank(BankSet(5), path)
    back = load_bank(path)
    assert back.num_classes == 5
    assert all(len(b) == 0 for b in back)


def test_three_entry_bank_keeps_confidences(tmp_path):
    bs = BankSet(2)
    confs = [0.1 + 1e-17 * 3, 2 / 3, np.nextafter(0.9, 1.0)]
    for i, q in enumerate(confs):
        insert(bs, [make_entry(1, q, i, num_classes=2)], i)
    save_bank(bs, tmp_path / "b.bin")
    assert list(load_bank(tmp_path / "b.bin")[1].confidences()) == confs


def test_bank_snapshot_header():
    buf = bank_to_bytes(BankSet(3))
    assert buf[:8] == b"ECAPBANK"
    assert buf[8] == 1
    assert int.from_bytes(buf[9:13], "little") == 3


@pytest.mark.parametrize("corrupt", [
    lambda b: b"XXXXBANK" + b[8:],
    lambda b: b[:8] + bytes([99]) + b[9:],
    lambda b: b[:40],
    lambda b: b + b"\x00",
])
def test_corrupt_snapshot_rejected(corrupt):
    buf = bank_to_bytes(_sample_bankset())
    with pytest.raises(FormatError):
        bank_from_bytes(corrupt(buf))


def test_masking_invariant_for_stored_entries():
    rng = np.random.default_rng(9)
    bs = BankSet(4)
    for img in range(5):
        probs = rng.dirichlet(np.ones(4) * 0.3, (6, 6))
        insert(bs, extract_class_samples(rng.random((6, 6, 3)), generate_pseudo_label(probs), img), img)
    for bank in bs:
        for e in bank.entries:
            pop = e.label.sum(axis=-1) > 0
            assert np.all(np.argmax(e.label[pop], axis=-1) == bank.class_id)
            assert np.all(e.image[~pop] == 0)
