"""Synthetic corpus: rendering, tokenizer, generation, oracle."""
import numpy as np
import pytest

from alignedit.corpus import (Corpus, build_sample, generate_corpus, oracle,
                              read_manifest, scenes, vocab)
from alignedit.corpus.vocab import BOS_ID, EOS_ID, N_TOK, PAD_ID


def test_vocab_is_exactly_48_symbols():
    assert vocab.VOCAB_SIZE == 48
    assert len(set(vocab.VOCAB)) == 48


def test_tokenize_template_instruction():
    ids = vocab.tokenize("make the square red")
    words = [vocab.VOCAB[i] for i in ids]
    assert words == ["<bos>", "make", "the", "square", "red", "<eos>", "<pad>", "<pad>"]


def test_tokenize_empty_instruction():
    assert vocab.tokenize("") == (BOS_ID, EOS_ID) + (PAD_ID,) * 6


def test_tokenize_truncates_with_eos_last():
    ids = vocab.tokenize("make the square red turn into a circle blue")
    assert len(ids) == N_TOK
    assert ids[0] == BOS_ID and ids[-1] == EOS_ID
    assert PAD_ID not in ids


def test_tokenize_rejects_out_of_vocabulary():
    with pytest.raises(vocab.VocabularyError):
        vocab.tokenize("make the square chartreuse")


def test_detokenize_roundtrip_for_all_canonical_instructions():
    scene = scenes.SceneSpec(0, (scenes.Shape("square", 2, 0),
                                 scenes.Shape("circle", 3, 5)))
    for edit in scenes.enumerate_edits(scene):
        text = scenes.canonical_instruction(edit)
        assert vocab.detokenize(vocab.tokenize(text)) == text


def test_render_empty_scene_is_constant():
    img = scenes.render(scenes.SceneSpec(3, ()))
    assert img.shape == (32, 32, 3)
    assert np.array_equal(img, np.broadcast_to(scenes.PALETTE[3], (32, 32, 3)))


def test_render_is_deterministic():
    s = scenes.SceneSpec(1, (scenes.Shape("triangle", 4, 9),))
    assert np.array_equal(scenes.render(s), scenes.render(s))


def test_scene_roundtrips_through_image():
    rngs = [scenes.SceneSpec(0, (scenes.Shape("square", 2, 0),)),
            scenes.SceneSpec(5, (scenes.Shape("circle", 0, 15),
                                 scenes.Shape("triangle", 2, 3),
                                 scenes.Shape("square", 4, 8)))]
    for s in rngs:
        recovered = scenes.scene_from_image(scenes.render(s))
        assert recovered.background == s.background
        assert recovered.sorted_shapes() == s.sorted_shapes()


def test_recolor_edit_touches_only_shape_mask():
    scene = scenes.SceneSpec(0, (scenes.Shape("circle", 2, 6),
                                 scenes.Shape("square", 3, 1)))
    edit = scenes.EditSpec(scenes.RECOLOR_SHAPE, kind="circle", color=5)
    before = scenes.render(scene)
    after = scenes.render(scenes.apply_edit(scene, edit))
    diff = ~(before == after).all(axis=-1)
    row, col = divmod(6, scenes.GRID)
    mask = np.zeros((32, 32), dtype=bool)
    mask[row * 8:(row + 1) * 8, col * 8:(col + 1) * 8] = scenes.SHAPE_MASKS["circle"]
    assert diff.any()
    assert not (diff & ~mask).any()


def test_edit_locality_for_non_background_edits():
    for sample_id in range(40):
        scene, edited_scene, edit, _, _ = build_sample(123, sample_id, False)
        if edit.op == scenes.RECOLOR_BACKGROUND:
            continue
        before, after = scenes.render(scene), scenes.render(edited_scene)
        allowed = scenes.edited_cells(scene, edited_scene)
        diff = ~(before == after).all(axis=-1)
        for cell in range(16):
            if cell in allowed:
                continue
            r, c = divmod(cell, scenes.GRID)
            assert not diff[r * 8:(r + 1) * 8, c * 8:(c + 1) * 8].any()


def test_edit_between_recovers_every_edit_kind():
    scene = scenes.SceneSpec(1, (scenes.Shape("square", 2, 0),
                                 scenes.Shape("circle", 4, 7)))
    for edit in scenes.enumerate_edits(scene):
        edited = scenes.apply_edit(scene, edit)
        assert scenes.edit_between(scene, edited) == edit


def test_generate_corpus_corruption_count_and_determinism(tmp_path):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    recs = generate_corpus(d1, seed=11, count=60, corruption_rate=0.3)
    assert sum(r.corrupted for r in recs) == 18
    generate_corpus(d2, seed=11, count=60, corruption_rate=0.3)
    assert (d1 / "manifest.tsv").read_bytes() == (d2 / "manifest.tsv").read_bytes()
    for rec in recs[:10]:
        assert (d1 / rec.original_path).read_bytes() == (d2 / rec.original_path).read_bytes()


def test_zero_corruption_instructions_match_ground_truth(tmp_path):
    recs = generate_corpus(tmp_path, seed=3, count=30, corruption_rate=0.0)
    corpus = Corpus(tmp_path)
    for i, rec in enumerate(recs):
        assert rec.instruction == rec.gt_instruction
        assert oracle.accepts(rec.instruction, corpus.original(i), corpus.edited(i))


def test_corrupted_samples_fail_the_pixel_oracle(tmp_path):
    recs = generate_corpus(tmp_path, seed=5, count=50, corruption_rate=0.4)
    corpus = Corpus(tmp_path)
    for i, rec in enumerate(recs):
        ok = oracle.accepts(rec.instruction, corpus.original(i), corpus.edited(i))
        if rec.corrupted:
            assert rec.instruction != rec.gt_instruction
            assert not ok
        else:
            assert ok


def test_manifest_roundtrip_is_byte_identical(tmp_path):
    generate_corpus(tmp_path, seed=9, count=20, corruption_rate=0.2)
    path = tmp_path / "manifest.tsv"
    first = path.read_bytes()
    records = read_manifest(path)
    from alignedit.corpus import write_manifest
    write_manifest(path, records)
    assert path.read_bytes() == first


def test_corpus_rejects_bad_corruption_rate(tmp_path):
    with pytest.raises(ValueError):
        generate_corpus(tmp_path, seed=1, count=5, corruption_rate=1.0)
