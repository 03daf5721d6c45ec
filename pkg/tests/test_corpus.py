import json
import os
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tasnn.corpus import (CorpusConfig, FamilySignature, FunctionBlock, SyntheticProgram,
                          _substitution_key, build_corpus, generate_family, insert_junk, load_manifest,
                          make_variant, shuffle_functions, split_function, write_corpus)
from tasnn.features import full_entropy


def prog(*bodies, family="A"):
    return SyntheticProgram(family, [FunctionBlock(f"b{i}", bytes(b)) for i, b in enumerate(bodies)])


programs = st.lists(st.binary(min_size=1, max_size=40), min_size=2, max_size=8).map(lambda bs: prog(*bs))


class TestGenerateFamily:
    def test_deterministic(self):
        a = generate_family("A", 1, 7)
        b = generate_family("A", 1, 7)
        assert a[0].serialize() == b[0].serialize()

    def test_families_separate_by_entropy(self):
        # frozen from 100 samples each: seed 7 -> 1.9923 bits, seed 8 -> 7.4529 bits
        a = np.mean([full_entropy(p.serialize()) for p in generate_family("A", 100, 7)])
        b = np.mean([full_entropy(p.serialize()) for p in generate_family("B", 100, 8)])
        assert a == pytest.approx(1.9923, abs=1e-3)
        assert b == pytest.approx(7.4529, abs=1e-3)
        assert abs(a - b) >= 0.5

    @pytest.mark.parametrize("n", [0, -1, 2.5])
    def test_invalid_count(self, n):
        with pytest.raises(ValueError):
            generate_family("A", n, 7)

    @pytest.mark.parametrize("bucket", [256, 64, 1])
    def test_substitution_key_permutes_within_buckets(self, bucket):
        key = _substitution_key(np.random.default_rng(0), bucket)
        assert sorted(key.tolist()) == list(range(256))
        assert np.array_equal(key.astype(int) // bucket, np.arange(256) // bucket)

    @given(st.binary(min_size=1, max_size=600), st.integers(0, 2**31))
    @settings(max_examples=50, deadline=None)
    def test_substitution_preserves_entropy(self, data, seed):
        key = _substitution_key(np.random.default_rng(seed), 256)
        coded = key[np.frombuffer(data, dtype=np.uint8)].tobytes()
        assert full_entropy(coded) == pytest.approx(full_entropy(data), abs=1e-12)

    def test_polymorphic_samples_differ_in_bytes(self):
        sig = FamilySignature.from_seed(3, level=4.0, polymorphic=True)
        used = [frozenset(p.serialize()) for p in generate_family("A", 4, 3, signature=sig)]
        assert len(set(used)) > 1
        plain = FamilySignature.from_seed(3, level=4.0, polymorphic=False)
        for p in generate_family("A", 4, 3, signature=plain):
            assert set(p.serialize()) <= set(plain.alphabet)

    def test_bucket_must_divide_256(self):
        with pytest.raises(ValueError):
            FamilySignature.from_seed(1, bucket=3)


class TestShuffle:
    def test_two_blocks_swap(self):
        p = prog(b"\x01", b"\x02")
        out = shuffle_functions(p, seed=0)
        assert [b.id for b in out.blocks] == ["b1", "b0"]
        assert out.provenance == "shuffle"

    @given(programs, st.integers(0, 2**31))
    @settings(max_examples=50, deadline=None)
    def test_permutation_properties(self, p, seed):
        out = shuffle_functions(p, seed)
        assert sorted(b.id for b in out.blocks) == sorted(b.id for b in p.blocks)
        assert [b.id for b in out.blocks] != [b.id for b in p.blocks]
        assert Counter(out.serialize()) == Counter(p.serialize())
        assert full_entropy(out.serialize()) == full_entropy(p.serialize())

    def test_needs_two_blocks(self):
        with pytest.raises(ValueError):
            shuffle_functions(prog(b"\x01"), 0)


class TestJunk:
    def test_middle_insertion(self):
        p = prog(b"\x01\x02", b"\x03")
        out = insert_junk(p, b"\x00" * 4, 1, seed=5)
        assert len(out.blocks) == 3
        assert out.blocks[1].executable is False
        assert [b.id for b in out.blocks if b.executable] == ["b0", "b1"]
        assert out.provenance == "junk"

    def test_empty_junk_rejected(self):
        with pytest.raises(ValueError):
            insert_junk(prog(b"\x01", b"\x02"), b"", 1, 0)

    @pytest.mark.parametrize("pos", [-1, 3])
    def test_position_range(self, pos):
        with pytest.raises(IndexError):
            insert_junk(prog(b"\x01", b"\x02"), b"\x00", pos, 0)

    @given(programs, st.binary(min_size=1, max_size=30), st.data())
    @settings(max_examples=50, deadline=None)
    def test_removing_junk_restores_input(self, p, junk, data):
        pos = data.draw(st.integers(0, len(p.blocks)))
        out = insert_junk(p, junk, pos, data.draw(st.integers(0, 2**31)))
        kept = [b for b in out.blocks if b.executable]
        assert kept == list(p.blocks)
        assert out.executable_byte_counts() == p.executable_byte_counts()


class TestSplit:
    def test_midpoint(self):
        p = prog(bytes([1, 2, 3, 4]), b"\x09")
        out = split_function(p, "b0", 2, seed=1)
        frags = {b.id: b.body for b in out.blocks if b.id.startswith("b0.")}
        assert frags == {"b0.0": bytes([1, 2]), "b0.1": bytes([3, 4])}
        assert out.provenance == "split"

    def test_one_byte_fragments(self):
        p = prog(bytes([5, 6, 7]), b"\x09")
        out = split_function(p, "b0", 3, seed=2)
        frags = sorted((b.id, b.body) for b in out.blocks if b.id.startswith("b0."))
        assert [f[1] for f in frags] == [b"\x05", b"\x06", b"\x07"]

    @pytest.mark.parametrize("n", [1, 5])
    def test_fragment_range(self, n):
        with pytest.raises(ValueError):
            split_function(prog(bytes([1, 2, 3, 4]), b"\x00"), "b0", n, 0)

    def test_unknown_target(self):
        with pytest.raises(KeyError):
            split_function(prog(b"\x01\x02", b"\x00"), "nope", 2, 0)

    @given(programs, st.data())
    @settings(max_examples=50, deadline=None)
    def test_reconstruction(self, p, data):
        target = data.draw(st.sampled_from([b for b in p.blocks if len(b.body) >= 2] or [None]))
        if target is None:
            return
        n = data.draw(st.integers(2, len(target.body)))
        out = split_function(p, target.id, n, data.draw(st.integers(0, 2**31)))
        frags = sorted((int(b.id.rsplit(".", 1)[1]), b.body) for b in out.blocks
                       if b.id.startswith(target.id + "."))
        assert b"".join(f[1] for f in frags) == target.body
        assert out.executable_byte_counts() == p.executable_byte_counts()


@pytest.mark.parametrize("transform", ["shuffle", "junk", "split"])
def test_variants_deterministic_and_valid(transform):
    p = generate_family("A", 1, 11)[0]
    a = make_variant(p, transform, 3)
    b = make_variant(p, transform, 3)
    assert a.serialize() == b.serialize()
    assert a.provenance == transform
    assert a.executable_byte_counts() == p.executable_byte_counts()


class TestCorpus:
    def test_default_layout(self):
        cfg = CorpusConfig(n_families=3, samples_per_family=10, variants_per_transform=1)
        entries = build_corpus(cfg)
        assert len(entries) == 30
        prov = Counter(e.provenance for e in entries)
        assert prov == {"original": 21, "shuffle": 3, "junk": 3, "split": 3}
        origins = {e.id for e in entries if e.provenance == "original"}
        assert all(e.origin in origins for e in entries)

    def test_levels_give_distinct_entropy(self):
        entries = build_corpus(CorpusConfig(n_families=13, samples_per_family=8,
                                            variants_per_transform=1))
        means = {}
        for e in entries:
            means.setdefault(e.family, []).append(full_entropy(e.program.serialize()))
        levels = [np.mean(v) for _, v in sorted(means.items())]
        assert np.all(np.diff(levels) > 0.3)

    def test_write_and_load(self, tmp_path):
        cfg = CorpusConfig(n_families=2, samples_per_family=8, variants_per_transform=1, seed=4)
        manifest = write_corpus(cfg, tmp_path / "c")
        loaded, root = load_manifest(tmp_path / "c")
        assert loaded == manifest
        assert len(loaded["entries"]) == 16
        assert [f["samples"] for f in loaded["families"]] == [8, 8]
        text = (tmp_path / "c" / "manifest.json").read_text()
        assert text == json.dumps(json.loads(text), indent=2, sort_keys=True) + "\n"
        for rec in loaded["entries"]:
            assert os.path.getsize(os.path.join(root, rec["path"])) > 0
        again = write_corpus(cfg, tmp_path / "d")
        assert again == manifest
