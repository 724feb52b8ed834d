from __future__ import annotations

import struct
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcrank.cache import CacheKey, EncodingCache
from dcrank.encoder import DOCUMENT, QUESTION, EncodingMatrix
from dcrank.errors import CacheMissError, ConsistencyError, FormatError, InvalidInputError

D, L, H = 4, 3, 0xDEADBEEF12345678


def enc(rng, true_length=2, model_hash=H) -> EncodingMatrix:
    return EncodingMatrix(rng.normal(size=(L, D)).astype(np.float32), DOCUMENT, model_hash, true_length)


def same(a: EncodingMatrix, b: EncodingMatrix) -> bool:
    return a.values.tobytes() == b.values.tobytes() and a.true_length == b.true_length


def test_put_get_and_idempotent_put(rng):
    c = EncodingCache(D, L, H)
    e = enc(rng)
    c.put(CacheKey("a", H), e)
    c.put(CacheKey("a", H), EncodingMatrix(e.values.copy(), DOCUMENT, H, 2))
    assert len(c) == 1 and same(c.get(CacheKey("a", H)), e)
    got = c.get(CacheKey("a", H))
    got.values[:] = 0  # callers get a copy
    assert same(c.get(CacheKey("a", H)), e)


def test_conflicting_put_raises(rng):
    c = EncodingCache(D, L, H)
    e = enc(rng)
    c.put(CacheKey("a", H), e)
    bumped = e.values.copy()
    bumped[0, 0] = np.nextafter(bumped[0, 0], np.float32(np.inf))
    with pytest.raises(ConsistencyError):
        c.put(CacheKey("a", H), EncodingMatrix(bumped, DOCUMENT, H, 2))
    with pytest.raises(ConsistencyError):
        c.put(CacheKey("a", H), EncodingMatrix(e.values, DOCUMENT, H, 3))
    assert same(c.get(CacheKey("a", H)), e)


def test_put_validation(rng):
    c = EncodingCache(D, L, H)
    with pytest.raises(InvalidInputError):
        c.put(CacheKey("a", H + 1), enc(rng, model_hash=H + 1))
    with pytest.raises(InvalidInputError):
        c.put(CacheKey("a", H), EncodingMatrix(np.zeros((L, D + 1), np.float32), DOCUMENT, H, 1))
    with pytest.raises(InvalidInputError):
        c.put(CacheKey("a", H), EncodingMatrix(np.zeros((L, D), np.float32), QUESTION, H, 1))


def test_misses_carry_the_key(rng):
    c = EncodingCache(D, L, H)
    with pytest.raises(CacheMissError) as err:
        c.get(CacheKey("a", H))
    assert err.value.keys == [CacheKey("a", H)]
    c.put(CacheKey("a", H), enc(rng))
    stale = CacheKey("a", H ^ 1)
    with pytest.raises(CacheMissError):
        c.get(stale)
    assert stale not in c and c.missing(["a", "b"], H) == ["b"] and c.missing(["a"], H ^ 1) == ["a"]


def test_persist_load_hundred_entries_bitwise(tmp_path, rng):
    c = EncodingCache(D, L, H)
    entries = {f"doc-{i:03d}-é": enc(rng, int(rng.integers(1, L + 1))) for i in rng.permutation(100)}
    for k, e in entries.items():
        c.put(CacheKey(k, H), e)
    path = tmp_path / "c.bin"
    c.persist(path)
    loaded = EncodingCache.load(path)
    assert len(loaded) == 100 and (loaded.d, loaded.max_len, loaded.model_hash) == (D, L, H)
    assert sum(same(loaded.get(CacheKey(k, H)), e) for k, e in entries.items()) == 100
    # re-serialising a loaded cache reproduces the file exactly
    assert loaded.to_bytes() == path.read_bytes()


def test_file_layout_matches_documented_format(rng):
    c = EncodingCache(D, L, H)
    e1, e2 = enc(rng, 1), enc(rng, 3)
    c.put(CacheKey("zz", H), e2)
    c.put(CacheKey("ab", H), e1)
    raw = c.to_bytes()
    magic, version, d, ld, mh, count = struct.unpack_from("<4sHIIQQ", raw, 0)
    assert (magic, version, d, ld, mh, count) == (b"DCBC", 1, D, L, H, 2)
    pos = struct.calcsize("<4sHIIQQ")
    index = []
    for _ in range(count):
        (n,) = struct.unpack_from("<I", raw, pos)
        key = raw[pos + 4: pos + 4 + n].decode()
        (off,) = struct.unpack_from("<Q", raw, pos + 4 + n)
        index.append((key, off))
        pos += 12 + n
    stride = L * D * 4 + 4
    assert index == [("ab", 0), ("zz", stride)]
    payload = raw[pos:]
    assert len(payload) == count * stride
    assert payload[:L * D * 4] == e1.values.astype("<f4").tobytes()
    assert struct.unpack_from("<I", payload, L * D * 4) == (1,)


def test_empty_cache_round_trips(tmp_path):
    c = EncodingCache(D, L, H)
    c.persist(tmp_path / "e.bin")
    loaded = EncodingCache.load(tmp_path / "e.bin")
    assert len(loaded) == 0 and loaded.keys() == []


@pytest.mark.parametrize("mutate, offset", [
    (lambda b: b"NOPE" + b[4:], 0),
    (lambda b: b[:4] + struct.pack("<H", 9) + b[6:], 4),
    (lambda b: b[:10], 10),
    (lambda b: b[:-1], None),
    (lambda b: b + b"\0", None),
])
def test_corrupt_files_raise_format_error_with_offset(tmp_path, rng, mutate, offset):
    c = EncodingCache(D, L, H)
    for k in ("a", "b"):
        c.put(CacheKey(k, H), enc(rng))
    path = tmp_path / "bad.bin"
    path.write_bytes(mutate(c.to_bytes()))
    with pytest.raises(FormatError) as err:
        EncodingCache.load(path)
    assert err.value.offset is not None
    if offset is not None:
        assert err.value.offset == offset
    assert "offset" in str(err.value)


def test_unsorted_index_rejected(rng):
    c = EncodingCache(D, L, H)
    for k in ("a", "b"):
        c.put(CacheKey(k, H), enc(rng))
    raw = bytearray(c.to_bytes())
    base = struct.calcsize("<4sHIIQQ")
    raw[base + 4: base + 5] = b"c"  # first key "a" -> "c", now after "b"
    with pytest.raises(FormatError, match="sorted"):
        EncodingCache.from_bytes(bytes(raw))


def test_random_interleavings_against_dict_oracle():
    rng = np.random.default_rng(99)
    cache = EncodingCache(D, L, H)
    oracle: dict[str, bytes] = {}
    pool = [f"k{i}" for i in range(300)]
    reloads = 0
    for step in range(10_000):
        key = pool[int(rng.integers(len(pool)))]
        op = rng.random()
        if op < 0.45:
            vals = np.full((L, D), hash(key) % 997, np.float32)
            cache.put(CacheKey(key, H), EncodingMatrix(vals, DOCUMENT, H, 1))
            oracle[key] = vals.tobytes()
        elif op < 0.995:
            if key in oracle:
                assert cache.get(CacheKey(key, H)).values.tobytes() == oracle[key]
            else:
                with pytest.raises(CacheMissError):
                    cache.get(CacheKey(key, H))
        else:
            cache = EncodingCache.from_bytes(cache.to_bytes())
            reloads += 1
        assert len(cache) == len(oracle)
    assert reloads > 10


@settings(max_examples=50)
@given(st.dictionaries(st.text(min_size=1, max_size=8), st.integers(1, L), max_size=12))
def test_round_trip_property(entries):
    c = EncodingCache(D, L, H)
    for k, tl in entries.items():
        c.put(CacheKey(k, H), EncodingMatrix(np.full((L, D), tl, np.float32), DOCUMENT, H, tl))
    loaded = EncodingCache.from_bytes(c.to_bytes())
    assert sorted(k.doc_id for k in loaded.keys()) == sorted(entries)
    for k, tl in entries.items():
        assert loaded.get(CacheKey(k, H)).true_length == tl


def test_concurrent_readers_see_consistent_bytes(rng):
    c = EncodingCache(D, L, H)
    entries = {f"d{i}": enc(rng) for i in range(50)}
    for k, e in entries.items():
        c.put(CacheKey(k, H), e)
    c = EncodingCache.from_bytes(c.to_bytes())
    errors = []

    def reader():
        for k, e in entries.items():
            if not same(c.get(CacheKey(k, H)), e):
                errors.append(k)

    threads = [threading.Thread(target=reader) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
