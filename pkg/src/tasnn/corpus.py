"""Synthetic program corpus and control-flow obfuscation transforms.

Programs are ordered lists of function blocks. Serialising a program
concatenates block bodies in order, which stands in for the compiled binary.
Every family draws its block bytes from its own byte-value distribution, so
family identity shows up in entropy statistics.
"""
from __future__ import annotations

import hashlib
import json
import os
import shutil
import tempfile
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

PROVENANCES = ("original", "shuffle", "junk", "split")
TRANSFORMS = ("shuffle", "junk", "split")


@dataclass(frozen=True)
class FunctionBlock:
    id: str
    body: bytes
    executable: bool = True

    def __post_init__(self):
        if not isinstance(self.body, (bytes, bytearray)) or len(self.body) == 0:
            raise ValueError(f"block {self.id!r}: body must be a non-empty byte string")
        object.__setattr__(self, "body", bytes(self.body))


@dataclass(frozen=True)
class SyntheticProgram:
    family: str
    blocks: tuple
    provenance: str = "original"

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if not any(b.executable for b in self.blocks):
            raise ValueError("program needs at least one executable block")
        ids = [b.id for b in self.blocks]
        if len(set(ids)) != len(ids):
            raise ValueError("block ids must be unique within a program")

    def serialize(self) -> bytes:
        return b"".join(b.body for b in self.blocks)

    def executable_byte_counts(self) -> Counter:
        return Counter(b"".join(b.body for b in self.blocks if b.executable))

    def block(self, block_id):
        for b in self.blocks:
            if b.id == block_id:
                return b
        raise KeyError(block_id)


@dataclass(frozen=True)
class FamilySignature:
    """Byte-value distribution and layout ranges shared by one family."""

    alphabet: tuple
    weights: tuple
    n_blocks: tuple = (6, 12)
    block_len: tuple = (384, 1536)
    concentration: float = 40.0
    polymorphic: bool = True
    bucket: int = 256

    @classmethod
    def from_seed(cls, seed, level=None, n_blocks=(6, 12), block_len=(384, 1536),
                  polymorphic=True, bucket=256):
        """Draw a signature. ``level`` fixes the target entropy in bits."""
        rng = np.random.default_rng([seed, 0x5167])
        if level is None:
            level = rng.uniform(1.0, 7.5)
        k = int(np.clip(round(2.0 ** level), 2, 256))
        alphabet = np.sort(rng.choice(256, size=k, replace=False))
        weights = rng.dirichlet(np.full(k, 50.0))
        return cls(tuple(int(v) for v in alphabet), tuple(float(w) for w in weights),
                   tuple(n_blocks), tuple(block_len), polymorphic=bool(polymorphic),
                   bucket=int(bucket))

    def __post_init__(self):
        if self.bucket < 1 or 256 % self.bucket:
            raise ValueError("bucket must divide 256")

    @property
    def entropy(self):
        w = np.asarray(self.weights)
        return float(-(w * np.log2(w)).sum())


def _draw_body(rng, sig, length):
    w = rng.dirichlet(np.asarray(sig.weights) * sig.concentration * len(sig.weights))
    idx = rng.choice(len(sig.alphabet), size=length, p=w)
    return np.asarray(sig.alphabet, dtype=np.uint8)[idx].tobytes()


def _substitution_key(rng, bucket):
    key = np.arange(256).reshape(-1, bucket)
    key = rng.permuted(key, axis=1)
    return key.reshape(-1).astype(np.uint8)


def generate_family(name, n_samples, signature_seed, signature=None, sample_seed=None):
    """Generate ``n_samples`` original programs of one family.

    The family's byte distribution comes from ``signature`` or, when omitted,
    from ``FamilySignature.from_seed(signature_seed)``. With a polymorphic
    signature each sample is additionally passed through its own random
    byte substitution (a packer-style encoding): byte values change from
    sample to sample while every entropy statistic is left untouched. The
    substitution only permutes values inside aligned buckets of
    ``signature.bucket`` values, so coarse intensity survives.
    Output is a pure function of the arguments.
    """
    if not isinstance(n_samples, (int, np.integer)) or n_samples < 1:
        raise ValueError(f"n_samples must be a positive integer, got {n_samples!r}")
    sig = signature if signature is not None else FamilySignature.from_seed(signature_seed)
    rng = np.random.default_rng([signature_seed if sample_seed is None else sample_seed, 0xFA])
    programs = []
    for _ in range(n_samples):
        n_blocks = int(rng.integers(sig.n_blocks[0], sig.n_blocks[1] + 1))
        key = _substitution_key(rng, sig.bucket) if sig.polymorphic else None
        blocks = []
        for j in range(n_blocks):
            length = int(rng.integers(sig.block_len[0], sig.block_len[1] + 1))
            body = _draw_body(rng, sig, length)
            if key is not None:
                body = key[np.frombuffer(body, dtype=np.uint8)].tobytes()
            blocks.append(FunctionBlock(f"f{j:03d}", body))
        programs.append(SyntheticProgram(name, blocks, "original"))
    return programs


def shuffle_functions(p, seed):
    """Reorder the blocks with a seeded non-identity permutation."""
    n = len(p.blocks)
    if n < 2:
        raise ValueError("shuffle needs at least 2 blocks")
    rng = np.random.default_rng([seed, 0x5F])
    perm = rng.permutation(n)
    # re-draw identity permutations so the layout always changes
    while np.array_equal(perm, np.arange(n)):
        perm = rng.permutation(n)
    return SyntheticProgram(p.family, [p.blocks[i] for i in perm], "shuffle")


def insert_junk(p, junk_body, position, seed):
    """Insert a never-executed block at ``position``."""
    if not 0 <= position <= len(p.blocks):
        raise IndexError(f"position {position} outside [0, {len(p.blocks)}]")
    taken = {b.id for b in p.blocks}
    rng = np.random.default_rng([seed, 0x7A])
    junk_id = f"junk{int(rng.integers(1 << 30)):08x}"
    while junk_id in taken:
        junk_id = f"junk{int(rng.integers(1 << 30)):08x}"
    junk = FunctionBlock(junk_id, junk_body, executable=False)
    blocks = list(p.blocks)
    blocks.insert(position, junk)
    return SyntheticProgram(p.family, blocks, "junk")


def split_function(p, target, n_fragments, seed):
    """Cut block ``target`` into contiguous fragments scattered through the program.

    Fragment ``i`` gets id ``"<target>.<i>"``; joining fragments by index
    restores the original body. Cut points split the body as evenly as
    possible; fragment positions are drawn from ``seed``.
    """
    ids = [b.id for b in p.blocks]
    if target not in ids:
        raise KeyError(f"unknown block {target!r}")
    src = p.blocks[ids.index(target)]
    if not 2 <= n_fragments <= len(src.body):
        raise ValueError(f"n_fragments must be in [2, {len(src.body)}], got {n_fragments}")
    bounds = np.linspace(0, len(src.body), n_fragments + 1).round().astype(int)
    pieces = [
        FunctionBlock(f"{target}.{i}", src.body[bounds[i]:bounds[i + 1]], src.executable)
        for i in range(n_fragments)
    ]
    rng = np.random.default_rng([seed, 0x59])
    blocks = [b for b in p.blocks if b.id != target]
    for piece in pieces:
        blocks.insert(int(rng.integers(0, len(blocks) + 1)), piece)
    return SyntheticProgram(p.family, blocks, "split")


def junk_array(rng, length):
    """Bytes of a dummy data array: a short random pattern, repeated."""
    period = int(rng.integers(1, 9))
    pattern = rng.integers(0, 256, size=period, dtype=np.uint8)
    return np.resize(pattern, length).tobytes()


def make_variant(p, transform, seed):
    """Apply one named transform with parameters drawn from ``seed``."""
    rng = np.random.default_rng([seed, 0xAA])
    if transform == "shuffle":
        return shuffle_functions(p, int(rng.integers(1 << 31)))
    if transform == "junk":
        length = int(rng.integers(256, 1025))
        pos = int(rng.integers(0, len(p.blocks) + 1))
        return insert_junk(p, junk_array(rng, length), pos, int(rng.integers(1 << 31)))
    if transform == "split":
        candidates = [b for b in p.blocks if b.executable and len(b.body) >= 2]
        target = candidates[int(rng.integers(len(candidates)))]
        n_frag = int(rng.integers(2, min(4, len(target.body)) + 1))
        return split_function(p, target.id, n_frag, int(rng.integers(1 << 31)))
    raise ValueError(f"unknown transform {transform!r}")


# -- corpus assembly ---------------------------------------------------------

@dataclass
class CorpusConfig:
    n_families: int = 13
    samples_per_family: int = 30
    variants_per_transform: int = 2
    transforms: tuple = TRANSFORMS
    seed: int = 0
    min_level: float = 1.0
    max_level: float = 7.5
    n_blocks: tuple = (6, 12)
    block_len: tuple = (384, 1536)
    polymorphic: bool = True
    bucket: int = 64

    def __post_init__(self):
        self.transforms = tuple(self.transforms)
        self.n_blocks = tuple(self.n_blocks)
        self.block_len = tuple(self.block_len)
        bad = [t for t in self.transforms if t not in TRANSFORMS]
        if bad:
            raise ValueError(f"unknown transforms: {bad}")
        if self.n_families < 1:
            raise ValueError("n_families must be >= 1")
        if self.originals_per_family < 1:
            raise ValueError("samples_per_family leaves no room for originals")

    @property
    def originals_per_family(self):
        return self.samples_per_family - self.variants_per_transform * len(self.transforms)

    def family_levels(self):
        if self.n_families == 1:
            return [0.5 * (self.min_level + self.max_level)]
        return list(np.linspace(self.min_level, self.max_level, self.n_families))


@dataclass
class CorpusEntry:
    id: str
    family: str
    provenance: str
    origin: str
    program: SyntheticProgram = field(repr=False)


def family_name(i):
    return f"fam{i:02d}"


def build_corpus(cfg):
    """Originals plus obfuscated variants for every family, in a fixed order."""
    entries = []
    levels = cfg.family_levels()
    for fi in range(cfg.n_families):
        name = family_name(fi)
        sig_seed = int(np.random.default_rng([cfg.seed, fi, 1]).integers(1 << 31))
        sig = FamilySignature.from_seed(sig_seed, level=levels[fi], n_blocks=cfg.n_blocks,
                                        block_len=cfg.block_len, polymorphic=cfg.polymorphic,
                                        bucket=cfg.bucket)
        originals = generate_family(name, cfg.originals_per_family, sig_seed, signature=sig,
                                    sample_seed=int(np.random.default_rng([cfg.seed, fi, 2]).integers(1 << 31)))
        fam_entries = [CorpusEntry(f"{name}-o{j:03d}", name, "original", f"{name}-o{j:03d}", p)
                       for j, p in enumerate(originals)]
        rng = np.random.default_rng([cfg.seed, fi, 3])
        for t in cfg.transforms:
            picks = rng.choice(len(originals), size=cfg.variants_per_transform,
                               replace=cfg.variants_per_transform > len(originals))
            for v, j in enumerate(picks):
                var = make_variant(originals[j], t, int(rng.integers(1 << 31)))
                vid = f"{name}-{t}{v:02d}"
                fam_entries.append(CorpusEntry(vid, name, t, fam_entries[j].id, var))
        entries.extend(fam_entries)
    return entries


def manifest_dict(cfg, entries):
    fams = {}
    for e in entries:
        rec = fams.setdefault(e.family, {"name": e.family, "samples": 0, "variants": 0})
        rec["samples"] += 1
        rec["variants"] += e.provenance != "original"
    return {
        "kind": "corpus",
        "version": 1,
        "seed": cfg.seed,
        "config": {
            "n_families": cfg.n_families,
            "samples_per_family": cfg.samples_per_family,
            "variants_per_transform": cfg.variants_per_transform,
            "transforms": list(cfg.transforms),
            "min_level": cfg.min_level,
            "max_level": cfg.max_level,
            "n_blocks": list(cfg.n_blocks),
            "block_len": list(cfg.block_len),
            "polymorphic": cfg.polymorphic,
            "bucket": cfg.bucket,
        },
        "families": list(fams.values()),
        "entries": [
            {"id": e.id, "path": f"{e.family}/{e.id}.bin", "family": e.family,
             "provenance": e.provenance, "origin": e.origin,
             "sha256": hashlib.sha256(e.program.serialize()).hexdigest()}
            for e in entries
        ],
    }


def dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _is_corpus_dir(path):
    try:
        with open(os.path.join(path, "manifest.json")) as fh:
            return json.load(fh).get("kind") == "corpus"
    except (OSError, ValueError, AttributeError):
        return False


def write_corpus(cfg, out_dir):
    """Write one ``.bin`` per program and ``manifest.json`` into ``out_dir``.

    Files are staged in a temporary sibling directory and moved into place
    only once everything is written, so a failure leaves no partial manifest.
    An existing ``out_dir`` is replaced only if it is empty or an earlier corpus.
    """
    entries = build_corpus(cfg)
    manifest = manifest_dict(cfg, entries)
    out_dir = os.path.abspath(out_dir)
    if os.path.exists(out_dir) and os.listdir(out_dir) and not _is_corpus_dir(out_dir):
        raise FileExistsError(f"{out_dir} exists and is not a corpus directory")
    parent = os.path.dirname(out_dir)
    os.makedirs(parent, exist_ok=True)
    stage = tempfile.mkdtemp(prefix=".synth-", dir=parent)
    try:
        for e, rec in zip(entries, manifest["entries"]):
            path = os.path.join(stage, rec["path"])
            os.makedirs(os.path.dirname(path), exist_ok=True)
            with open(path, "wb") as fh:
                fh.write(e.program.serialize())
        with open(os.path.join(stage, "manifest.json"), "w") as fh:
            fh.write(dump_json(manifest))
        if os.path.exists(out_dir):
            shutil.rmtree(out_dir)
        os.replace(stage, out_dir)
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    return manifest


def load_manifest(path):
    if os.path.isdir(path):
        path = os.path.join(path, "manifest.json")
    with open(path) as fh:
        manifest = json.load(fh)
    root = os.path.dirname(os.path.abspath(path))
    for rec in manifest["entries"]:
        if not os.path.isfile(os.path.join(root, rec["path"])):
            raise FileNotFoundError(f"manifest entry {rec['id']!r} missing file {rec['path']}")
    return manifest, root
