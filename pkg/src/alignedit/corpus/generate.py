"""Corpus generation, manifest I/O, and in-memory corpus access.

Every sample's randomness is keyed by its id so generation order (or
parallelism) cannot change the output. The manifest keeps the hidden
ground-truth instruction column for evaluation only.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..numerics import RngStream, load_tensor, save_tensor
from . import scenes, vocab

MANIFEST_VERSION = "#alignedit-manifest-v1"
MANIFEST_HEADER = "id\toriginal_path\tedited_path\tinstruction_ids\tgt_instruction_ids\tcorrupted"
MANIFEST_NAME = "manifest.tsv"

# mirrors the observed failure mix: mostly wholly-wrong instructions, some
# right-kind/wrong-argument ones
P_DIFFERENT_EDIT_KIND = 0.8


@dataclass
class CorpusRecord:
    sample_id: int
    original_path: str
    edited_path: str
    instruction: tuple
    gt_instruction: tuple
    corrupted: bool


def _sample_scene(rng):
    bg = int(rng.spawn("bg").integers(0, scenes.N_COLORS))
    n = int(np.searchsorted(np.cumsum([0.1, 0.3, 0.3, 0.3]),
                            rng.spawn("n").uniform(), side="right"))
    kinds = [scenes.KINDS[i] for i in rng.spawn("kinds").permutation(3)[:n]]
    cells = rng.spawn("cells").permutation(scenes.GRID * scenes.GRID)[:n]
    shapes = []
    for i, kind in enumerate(kinds):
        color = int(rng.spawn(f"color{i}").integers(0, scenes.N_COLORS - 1))
        if color >= bg:
            color += 1  # skip the background color
        shapes.append(scenes.Shape(kind, color, int(cells[i])))
    return scenes.SceneSpec(bg, tuple(shapes))


def _sample_edit(rng, scene):
    feasible = [op for op in scenes.EDIT_KINDS if scenes.enumerate_edits(scene, ops=[op])]
    op = rng.spawn("op").choice(feasible)
    return rng.spawn("pick").choice(scenes.enumerate_edits(scene, ops=[op]))


def _sample_corrupted_instruction(rng, scene, true_edit, true_tokens):
    """A plausible instruction for a different edit of the same scene."""
    for attempt in range(64):
        r = rng.spawn(f"try{attempt}")
        want_same_kind = r.spawn("mix").uniform() >= P_DIFFERENT_EDIT_KIND
        if want_same_kind:
            ops = [true_edit.op]
        else:
            ops = [op for op in scenes.EDIT_KINDS if op != true_edit.op]
        candidates = []
        for op in ops:
            candidates.extend(scenes.enumerate_edits(scene, ops=[op]))
        candidates = [e for e in candidates if e != true_edit]
        if not candidates:
            continue
        edit = r.spawn("pick").choice(candidates)
        tokens = vocab.tokenize(scenes.canonical_instruction(edit))
        if tokens != true_tokens:
            return tokens
    raise RuntimeError("could not sample a corrupted instruction")


def build_sample(seed, sample_id, corrupted):
    """Deterministic sample construction keyed by (seed, id)."""
    rng = RngStream(seed, f"data/sample/{sample_id}")
    scene = _sample_scene(rng.spawn("scene"))
    edit = _sample_edit(rng.spawn("edit"), scene)
    edited = scenes.apply_edit(scene, edit)
    gt_tokens = vocab.tokenize(scenes.canonical_instruction(edit))
    if corrupted:
        tokens = _sample_corrupted_instruction(rng.spawn("corrupt"), scene, edit, gt_tokens)
    else:
        tokens = gt_tokens
    return scene, edited, edit, tokens, gt_tokens


def generate_corpus(out_dir, seed, count, corruption_rate):
    """Write tensors and the manifest; returns the record list."""
    if not 0 <= corruption_rate < 1:
        raise ValueError(f"corruption_rate must be in [0,1), got {corruption_rate}")
    if count < 1:
        raise ValueError("count must be >= 1")
    out_dir = Path(out_dir)
    (out_dir / "tensors").mkdir(parents=True, exist_ok=True)
    n_corrupt = int(count * corruption_rate)
    corrupted_ids = set(
        int(i) for i in RngStream(seed, "data/corruption").permutation(count)[:n_corrupt])

    records = []
    for sample_id in range(count):
        scene, edited, _, tokens, gt_tokens = build_sample(
            seed, sample_id, sample_id in corrupted_ids)
        opath = f"tensors/{sample_id:06d}_o.ict"
        epath = f"tensors/{sample_id:06d}_e.ict"
        save_tensor(out_dir / opath, scenes.render(scene))
        save_tensor(out_dir / epath, scenes.render(edited))
        records.append(CorpusRecord(sample_id, opath, epath, tokens, gt_tokens,
                                    sample_id in corrupted_ids))
    write_manifest(out_dir / MANIFEST_NAME, records)
    return records


def write_manifest(path, records):
    lines = [MANIFEST_VERSION, MANIFEST_HEADER]
    for r in records:
        lines.append("\t".join([
            str(r.sample_id), r.original_path, r.edited_path,
            ",".join(str(t) for t in r.instruction),
            ",".join(str(t) for t in r.gt_instruction),
            "1" if r.corrupted else "0",
        ]))
    data = ("\n".join(lines) + "\n").encode("utf-8")
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


def read_manifest(path):
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines or lines[0] != MANIFEST_VERSION:
        raise ValueError(f"manifest version mismatch: expected {MANIFEST_VERSION!r}, "
                         f"got {lines[0][:40]!r}" if lines else "empty manifest")
    if len(lines) < 2 or lines[1] != MANIFEST_HEADER:
        raise ValueError("manifest header mismatch")
    records = []
    for ln in lines[2:]:
        if not ln:
            continue
        sid, opath, epath, instr, gt, corrupted = ln.split("\t")
        records.append(CorpusRecord(
            int(sid), opath, epath,
            tuple(int(t) for t in instr.split(",")),
            tuple(int(t) for t in gt.split(",")),
            corrupted == "1"))
    return records


class Corpus:
    """Manifest plus lazily cached image tensors."""

    def __init__(self, root):
        self.root = Path(root)
        self.records = read_manifest(self.root / MANIFEST_NAME)
        self._cache = {}

    def __len__(self):
        return len(self.records)

    def _load(self, rel):
        if rel not in self._cache:
            self._cache[rel] = load_tensor(self.root / rel)
        return self._cache[rel]

    def original(self, idx):
        return self._load(self.records[idx].original_path)

    def edited(self, idx):
        return self._load(self.records[idx].edited_path)

    def images(self, indices, which="original"):
        getter = self.original if which == "original" else self.edited
        return np.stack([getter(i) for i in indices])

    def instructions(self, indices):
        return np.array([self.records[i].instruction for i in indices], dtype=np.int64)

    def gt_instructions(self, indices):
        return np.array([self.records[i].gt_instruction for i in indices], dtype=np.int64)

    def split(self, holdout_fraction=0.1):
        """Deterministic train/holdout split: the id tail is held out."""
        n = len(self.records)
        n_hold = max(1, int(n * holdout_fraction))
        ids = list(range(n))
        return ids[:-n_hold], ids[-n_hold:]
