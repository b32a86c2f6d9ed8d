"""Landmark-driven two-stream talking-face synthesis.

A warp-and-merge stream fetches texture from a bank of source images of the
subject, an appearance stream renders what the bank cannot supply, and a
learned mask blends the two.
"""

from .facegeom import SourceBank, heatmap_weights, mouth_openness, select_bank
from .netarch import Discriminator, Generator
from .synth import Pipeline, ablation_variant, synthesize_frame, synthesize_sequence

__version__ = "0.1.0"
