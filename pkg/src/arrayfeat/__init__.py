"""Spatial audio features (GCC-PHAT, SALSA, steered beamformer) for active
speaker detection and localisation with microphone arrays."""

from .types import FeatureKind, FeatureTensor, FrameTrack, GroundTruth, MultichannelClip, SpectralTensor

__version__ = "0.1.0"

__all__ = ["FeatureKind", "FeatureTensor", "FrameTrack", "GroundTruth", "MultichannelClip", "SpectralTensor"]
