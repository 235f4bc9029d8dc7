"""Closed toy vocabulary and fixed-length tokenizer.

Instructions are at most N_TOK ids: BOS first, words, EOS, then PAD suffix.
Anything longer is truncated with EOS forced into the last slot.
"""
from __future__ import annotations

N_TOK = 8

PAD, BOS, EOS = "<pad>", "<bos>", "<eos>"

_TEMPLATE_WORDS = ["make", "the", "background", "add", "a", "remove", "turn", "into"]
_KIND_WORDS = ["square", "circle", "triangle"]
_COLOR_WORDS = ["black", "white", "red", "green", "blue", "yellow", "purple", "orange"]
# reserved words keep the closed world at a fixed 48 symbols
_RESERVED_WORDS = [
    "recolor", "paint", "change", "set", "to", "it", "shape", "color", "new",
    "delete", "place", "put", "swap", "replace", "with", "fill", "draw",
    "erase", "move", "top", "bottom", "left", "right", "center", "row", "column",
]

VOCAB = [PAD, BOS, EOS] + _TEMPLATE_WORDS + _KIND_WORDS + _COLOR_WORDS + _RESERVED_WORDS
VOCAB_SIZE = len(VOCAB)

PAD_ID, BOS_ID, EOS_ID = 0, 1, 2

_WORD_TO_ID = {w: i for i, w in enumerate(VOCAB)}


class VocabularyError(ValueError):
    """Word outside the closed vocabulary."""


def tokenize(text):
    """Text -> tuple of N_TOK ids."""
    words = text.split()
    ids = []
    for w in words:
        if w not in _WORD_TO_ID:
            raise VocabularyError(f"word {w!r} not in the closed vocabulary")
        ids.append(_WORD_TO_ID[w])
    if len(ids) > N_TOK - 2:
        ids = ids[:N_TOK - 2]
    tokens = [BOS_ID] + ids + [EOS_ID]
    tokens += [PAD_ID] * (N_TOK - len(tokens))
    return tuple(tokens)


def detokenize(tokens):
    """Ids -> text, dropping BOS/EOS/PAD."""
    words = []
    for t in tokens:
        t = int(t)
        if t == EOS_ID:
            break
        if t in (PAD_ID, BOS_ID):
            continue
        words.append(VOCAB[t])
    return " ".join(words)
