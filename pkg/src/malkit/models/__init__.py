from .spec import FAMILIES, TRANSFER_FAMILIES, FeatureSchema, ModelSpec
from .layers import Dense, FeatureEmbedder, MLP, SimTier
from .zoo import Model, ModelOutput, PRED_CLIP, build, score_dataset

__all__ = [
    "FAMILIES",
    "TRANSFER_FAMILIES",
    "FeatureSchema",
    "ModelSpec",
    "Dense",
    "FeatureEmbedder",
    "MLP",
    "SimTier",
    "Model",
    "ModelOutput",
    "PRED_CLIP",
    "build",
    "score_dataset",
]
