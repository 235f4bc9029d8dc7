"""Latent-domain machinery: codec, noise schedule, forward/reverse steps."""
from .codec import CodecError, LatentCodec, train_codec
from .schedule import (DEFAULT_T, LATENT_SHAPE, LatentState, NoiseSchedule,
                       ScheduleError, fd, fd_batch, rd, rd_batch_graph)

__all__ = [
    "CodecError", "DEFAULT_T", "LATENT_SHAPE", "LatentCodec", "LatentState",
    "NoiseSchedule", "ScheduleError", "fd", "fd_batch", "rd",
    "rd_batch_graph", "train_codec",
]
