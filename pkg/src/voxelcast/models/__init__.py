from .loss import FeatureExtractor, LossWeights, perceptual_distance, render_loss
from .nvr import NeuralVoxelRenderer, NvrConfig, nvr_forward, nvr_plus_forward
