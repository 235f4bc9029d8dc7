"""Feature backbones: attribute-supervised teacher and noisy-latent student."""
from .distill import (curriculum_upper_bound, holdout_distill_loss,
                      lddino_loss, train_ld_student)
from .model import (BackboneConfig, FeatureBackbone, FeatureStack, N_BLOCKS,
                    WIDTH)
from .teacher import TrainingDiverged, scene_labels, train_teacher

__all__ = [
    "BackboneConfig", "FeatureBackbone", "FeatureStack", "N_BLOCKS",
    "TrainingDiverged", "WIDTH", "curriculum_upper_bound",
    "holdout_distill_loss", "lddino_loss", "scene_labels", "train_ld_student",
    "train_teacher",
]
