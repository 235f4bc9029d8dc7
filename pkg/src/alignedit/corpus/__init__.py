"""Synthetic edit corpus: scenes, tokenizer, generator, pixel-diff oracle."""
from . import oracle, scenes, vocab
from .generate import (Corpus, CorpusRecord, MANIFEST_HEADER, MANIFEST_NAME,
                       MANIFEST_VERSION, build_sample, generate_corpus,
                       read_manifest, write_manifest)

__all__ = [
    "Corpus", "CorpusRecord", "MANIFEST_HEADER", "MANIFEST_NAME",
    "MANIFEST_VERSION", "build_sample", "generate_corpus", "oracle",
    "read_manifest", "scenes", "vocab", "write_manifest",
]
