"""Visual-change/instruction encoder pair and contrastive training."""
from .losses import contrastive_loss, pairwise_cosine
from .model import (ChangeEncoder, ContrastiveHead, TAU_INIT, TAU_MAX,
                    TAU_MIN, TextEncoder)
from .train import (AlignmentModel, clean_vs_corrupted_similarity,
                    in_batch_top1, retrieval_accuracy, train_iclip)

__all__ = [
    "AlignmentModel", "ChangeEncoder", "ContrastiveHead", "TAU_INIT",
    "TAU_MAX", "TAU_MIN", "TextEncoder", "clean_vs_corrupted_similarity",
    "contrastive_loss", "in_batch_top1", "pairwise_cosine",
    "retrieval_accuracy", "train_iclip",
]
