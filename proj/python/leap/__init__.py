"""Learned articulated occupancy of people."""

from ._core import (
    Body,
    Model,
    default_config,
    eval_iou,
    place,
    train_lbs,
    train_occ,
)

__all__ = [
    "Body",
    "Model",
    "default_config",
    "eval_iou",
    "place",
    "train_lbs",
    "train_occ",
]
