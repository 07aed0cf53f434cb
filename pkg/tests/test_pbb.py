import json
import threading
from dataclasses import replace

import pytest

from hsdir_longevity.encoding import canonical_json, hash_parts
from hsdir_longevity.pbb import GENESIS, BulletinBoard, ChainBroken, OutOfPhase, entry_hash


def test_hash_parts_is_length_prefixed():
    assert hash_parts(b"ab", b"c") != hash_parts(b"a", b"bc")
    assert hash_parts("x", 12) == hash_parts(b"x", b"12")


def test_canonical_json():
    assert canonical_json({"b": 1, "a": [1, "x"]}) == b'{"a":[1,"x"],"b":1}'


def test_append_and_chain(tmp_path):
    board = BulletinBoard(tmp_path / "pbb.jsonl")
    e0 = board.append(1, "keygen-commit", {"commitment": "00"})
    e1 = board.append(2, "keygen-commit", {"commitment": "11"})
    assert e0.prev_hash == GENESIS and e1.prev_hash == e0.entry_hash
    assert e1.entry_hash == entry_hash(1, 2, "keygen-commit", b'{"commitment":"11"}', e0.entry_hash)
    assert board.verify_chain()
    lines = (tmp_path / "pbb.jsonl").read_text().splitlines()
    assert len(lines) == 2
    assert list(json.loads(lines[0])) == sorted(json.loads(lines[0]))
    loaded = BulletinBoard.load(tmp_path / "pbb.jsonl")
    assert loaded.entries == board.entries and loaded.verify_chain()


def test_phase_order():
    board = BulletinBoard()
    board.append(1, "keygen-commit", {})
    board.append(1, "keygen-open", {})
    board.append(1, "dc-commit", {})
    board.append(1, "dc-open", {})
    board.append(1, "dc-commit", {})  # next epoch
    board.append(1, "dc-open", {})
    board.append(1, "aggregate", {})
    with pytest.raises(OutOfPhase):
        board.append(1, "dc-commit", {})
    with pytest.raises(OutOfPhase):
        board.append(1, "keygen-open", {})
    with pytest.raises(OutOfPhase):
        board.append(1, "gossip", {})
    assert [e.phase for e in board.by_phase("dc-open")] == ["dc-open", "dc-open"]


def test_tampering_detected(tmp_path):
    board = BulletinBoard()
    for i in range(4):
        board.append(i, "keygen-commit", {"i": i})
    board.entries[2] = replace(board.entries[2], payload=b'{"i":99}')
    with pytest.raises(ChainBroken, match="entry 2"):
        board.verify_chain()

    board = BulletinBoard(tmp_path / "b.jsonl")
    for i in range(3):
        board.append(i, "keygen-commit", {"i": i})
    lines = (tmp_path / "b.jsonl").read_text().splitlines()
    del lines[1]
    (tmp_path / "b.jsonl").write_text("\n".join(lines) + "\n")
    with pytest.raises(ChainBroken):
        BulletinBoard.load(tmp_path / "b.jsonl").verify_chain()


def test_concurrent_appends_serialize():
    board = BulletinBoard()

    def worker(k):
        for i in range(50):
            board.append(k, "keygen-commit", {"k": k, "i": i})

    threads = [threading.Thread(target=worker, args=(k,)) for k in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(board.entries) == 200
    assert [e.seq for e in board.entries] == list(range(200))
    assert board.verify_chain()
