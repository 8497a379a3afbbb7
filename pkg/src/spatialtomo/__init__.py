"""Tomography of the transverse structure of light from intensity images."""

from .analysis import fidelity, random_mixed_state, random_pure_state
from .estimation import (
    ApgOptions,
    bloch_to_rho,
    dominant_eigenvector,
    linear_inversion,
    max_likelihood_apg,
    project_to_density,
    rho_to_bloch,
)
from .forward import CountData, born_probabilities, intensity_image, sample_photocounts
from .measurement import (
    MeasurementSet,
    combine_channels,
    converted_povm,
    gell_mann_basis,
    numerical_rank,
    pixel_povm,
    two_channel_povm,
)
from .modes import ModeBasis, PixelGrid, sample_basis
from .obstruction import ObstructionMask, apply_mask, obstructed_tomography

__version__ = "0.1.0"
