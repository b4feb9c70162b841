"""Joint vector/raster embedding: raster encoder, heads, triplet training."""

from sketchembed.crossmodal.convnet import RasterEncoder, train_raster_encoder
from sketchembed.crossmodal.store import load_joint, save_joint
from sketchembed.crossmodal.joint import (
    JointConfig,
    JointHeads,
    TripletBatch,
    own_instance_ranks,
    sample_triplets,
    sbir_query,
    train_joint,
    triplet_grads,
    triplet_loss,
    triplet_satisfaction,
)

__all__ = [
    "RasterEncoder",
    "train_raster_encoder",
    "load_joint",
    "save_joint",
    "JointConfig",
    "JointHeads",
    "TripletBatch",
    "own_instance_ranks",
    "sample_triplets",
    "sbir_query",
    "train_joint",
    "triplet_grads",
    "triplet_loss",
    "triplet_satisfaction",
]
