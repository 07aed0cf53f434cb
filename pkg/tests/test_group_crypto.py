import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsdir_longevity.group_crypto import (
    MODP_2048_P,
    BsgsSolver,
    Ciphertext,
    CommitmentMismatch,
    DlogNotFound,
    GroupParams,
    PublicShare,
    add,
    combine_pubkeys,
    derive_second_generator,
    dlog_bruteforce,
    dlog_bsgs,
    encrypt,
    get_group,
    joint_decrypt_element,
    keygen_share,
    mod2048_group,
    partial_decrypt,
    reencrypt,
    toy_group,
)

TOY = toy_group()
BIG = mod2048_group()


def test_toy_vectors():
    # all values below were evaluated by hand modulo 23
    share = keygen_share(TOY, np.random.default_rng(0), party=1, secret=3)
    assert share.A == 18
    c = encrypt(TOY, 18, 2, r=5)
    assert c == Ciphertext(12, 13)
    v = partial_decrypt(TOY, c, 3)
    assert v == 12 == pow(9, 2, 23)
    assert dlog_bsgs(TOY, 12, 100) == 2
    assert dlog_bruteforce(TOY, 12, 100) == 2


def test_toy_group_elements():
    qr = sorted({x * x % 23 for x in range(1, 23)})
    assert [x for x in range(1, 23) if TOY.is_element(x)] == qr
    assert not TOY.is_element(0) and not TOY.is_element(23)


def test_group_validation():
    for bad in ((23, 11, 5, 9), (23, 11, 4, 4), (25, 12, 4, 9), (23, 11, 1, 9)):
        with pytest.raises(ValueError):
            GroupParams(*bad)
    with pytest.raises(ValueError):
        get_group("tiny")


def test_mod2048_group():
    assert BIG.p == MODP_2048_P and BIG.p.bit_length() == 2048
    assert BIG.h == derive_second_generator(BIG.p)
    assert BIG.is_element(BIG.h) and BIG.h != BIG.g
    assert get_group("mod2048") == BIG and get_group("toy") == TOY
    assert GroupParams.from_json(BIG.to_json()) == BIG


def test_random_exponent_range_and_seeding():
    a = [BIG.random_exponent(np.random.default_rng(1)) for _ in range(2)]
    assert a[0] == a[1] and 0 <= a[0] < BIG.q
    assert 0 <= BIG.random_exponent() < BIG.q


def test_keygen_commitments():
    rng = np.random.default_rng(2)
    shares = [keygen_share(BIG, rng, party=i) for i in (1, 2, 3)]
    A = combine_pubkeys(BIG, [s.public() for s in shares])
    assert A == BIG.exp(BIG.g, sum(s.a for s in shares) % BIG.q)
    forged = PublicShare(2, BIG.mul(shares[1].A, BIG.g), shares[1].salt, shares[1].commitment)
    with pytest.raises(CommitmentMismatch) as exc:
        combine_pubkeys(BIG, [shares[0].public(), forged, shares[2].public()])
    assert exc.value.party == 2
    with pytest.raises(ValueError):
        combine_pubkeys(BIG, [])


def test_non_member_share_rejected():
    from hsdir_longevity.group_crypto import share_commitment
    salt = bytes(32)
    bad = PublicShare(1, 5, salt, share_commitment(1, 5, salt))  # 5 is a non-residue mod 23
    with pytest.raises(CommitmentMismatch):
        combine_pubkeys(TOY, [bad])


def _joint(params, n, rng):
    shares = [keygen_share(params, rng, party=i) for i in range(1, n + 1)]
    return shares, combine_pubkeys(params, [s.public() for s in shares])


def test_chained_decryption_big_group():
    rng = np.random.default_rng(3)
    shares, A = _joint(BIG, 3, rng)
    c = encrypt(BIG, A, 42, rng=rng)
    v = joint_decrypt_element(BIG, c, [s.a for s in shares])
    assert v == BIG.exp(BIG.h, 42)
    # the order of the chain does not matter
    assert joint_decrypt_element(BIG, c, [s.a for s in reversed(shares)]) == v
    # a product of shares is not the joint secret
    prod = shares[0].a * shares[1].a * shares[2].a % BIG.q
    assert joint_decrypt_element(BIG, c, [prod]) != v


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10), st.integers(0, 10), st.integers(0, 10**6), st.integers(1, 4))
def test_toy_homomorphism(m1, m2, seed, n):
    rng = np.random.default_rng(seed)
    shares, A = _joint(TOY, n, rng)
    c = add(TOY, encrypt(TOY, A, m1, rng=rng), encrypt(TOY, A, m2, rng=rng))
    c = reencrypt(TOY, A, c, rng=rng)
    v = joint_decrypt_element(TOY, c, [s.a for s in shares])
    assert v == pow(9, (m1 + m2) % 11, 23)
    assert dlog_bsgs(TOY, v, 10) == (m1 + m2) % 11


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 10**6))
def test_big_homomorphism(m1, m2, seed):
    rng = np.random.default_rng(seed)
    shares, A = _joint(BIG, 2, rng)
    c = reencrypt(BIG, A, add(BIG, encrypt(BIG, A, m1, rng=rng), encrypt(BIG, A, m2, rng=rng)), rng=rng)
    v = joint_decrypt_element(BIG, c, [s.a for s in shares])
    assert dlog_bsgs(BIG, v, 1000) == m1 + m2


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2000), st.integers(0, 2000))
def test_bsgs_matches_bruteforce(m, bound):
    target = BIG.exp(BIG.h, m)
    if m <= bound:
        assert dlog_bsgs(BIG, target, bound) == dlog_bruteforce(BIG, target, bound) == m
    else:
        with pytest.raises(DlogNotFound):
            dlog_bsgs(BIG, target, bound)
        with pytest.raises(DlogNotFound):
            dlog_bruteforce(BIG, target, bound)


def test_bsgs_returns_smallest_exponent_in_toy_group():
    # h has order 11, so 12 = h^2 = h^13; the smallest exponent wins
    assert dlog_bsgs(TOY, 12, 100) == 2
    solver = BsgsSolver(TOY, 10)
    assert [solver.solve(pow(9, m, 23)) for m in range(11)] == list(range(11))
    with pytest.raises(DlogNotFound):
        dlog_bsgs(TOY, 5, 100)  # not a residue at all
    with pytest.raises(ValueError):
        BsgsSolver(TOY, -1)


def test_encrypt_rejects_out_of_range():
    with pytest.raises(ValueError):
        encrypt(TOY, 18, 11, r=1)
    with pytest.raises(ValueError):
        encrypt(TOY, 18, -1, r=1)


def test_reencrypt_changes_ciphertext_not_plaintext():
    rng = np.random.default_rng(4)
    shares, A = _joint(BIG, 1, rng)
    c = encrypt(BIG, A, 7, rng=rng)
    d = reencrypt(BIG, A, c, rng=rng)
    assert c != d
    assert joint_decrypt_element(BIG, d, [shares[0].a]) == BIG.exp(BIG.h, 7)
    assert Ciphertext.from_json(d.to_json()) == d
