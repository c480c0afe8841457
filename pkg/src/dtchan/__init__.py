"""Digital-twin channel toolkit.

Synthesizes ground-truth MISO-OFDM channels and path-loss maps from cuboid
scenes, extracts propagation-guided environment feature maps, reconstructs
CSI from sparse pilots via environment-conditioned proximal-gradient
iterations, and ships the dataset / metric / sensing / CLI pipelines around
them.
"""

from . import dataset, envfeat, errors, formats, metrics, patches, pilot, raychan, recon, scene, sensing

__version__ = "0.1.0"

__all__ = [
    "dataset",
    "envfeat",
    "errors",
    "formats",
    "metrics",
    "patches",
    "pilot",
    "raychan",
    "recon",
    "scene",
    "sensing",
    "__version__",
]
