"""Static-basis reference methods."""

from .dmd import DmdModel, dmd_fit, dmd_reconstruct
from .pcm import PcmExpansion, pcm_fit, pcm_total_variance
from .pod import PodBasis, pod_error, pod_fit, pod_project

__all__ = [
    "DmdModel",
    "PcmExpansion",
    "PodBasis",
    "dmd_fit",
    "dmd_reconstruct",
    "pcm_fit",
    "pcm_total_variance",
    "pod_error",
    "pod_fit",
    "pod_project",
]
