"""Brute-force pixel-diff edit classifier.

The edit space is finite and rasterization is invertible, so the true edit
between any rendered pair can be recovered exactly. The refiner is graded
against this, replacing eyeballed before/after comparisons with a measurable
verdict.
"""
from __future__ import annotations

from . import scenes, vocab


def classify_pair(img_original, img_edited):
    """The EditSpec relating two rendered images, or None."""
    scene_o = scenes.scene_from_image(img_original)
    scene_e = scenes.scene_from_image(img_edited)
    return scenes.edit_between(scene_o, scene_e)


def accepts(instruction_tokens, img_original, img_edited):
    """True iff the instruction is the canonical rendering of the true edit."""
    edit = classify_pair(img_original, img_edited)
    if edit is None:
        return False
    return tuple(instruction_tokens) == vocab.tokenize(scenes.canonical_instruction(edit))
