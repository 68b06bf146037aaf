"""Spectral-fidelity structured channel pruning at desk scale.

Builds per-channel complex interaction fields, scores channels by how well
a capacity-limited spectral autoencoder reconstructs them, fuses the score
with filter l1 magnitude, prunes by threshold with a minimum-keep
safeguard, rewires the sequential network and accounts for the FLOP and
parameter reduction.
"""

__version__ = "0.1.0"

from .tensor import CTensor4, Tensor4, batch_stats, bilinear_resize, broadcast_channel, vectorize_complex
from .spectral import SpectralStats, destandardize_spectrum, fft2, ifft2, standardize_spectrum
from .field import InteractionField, build_interaction_field, extract_aligned_channel
from .autoencoder import (
    AutoencoderParams,
    TrainConfig,
    ae_backward,
    ae_forward,
    ae_loss,
    init_autoencoder,
    train_layer_autoencoder,
)
from .scoring import (
    FusionRule,
    ImportanceVector,
    fidelity,
    fuse,
    l1_importance,
    normalize_layer_scores,
    reconstruct_field,
    score_layer,
)
from .network import NetworkSpec, load_spec, parse_spec, render_spec
from .prune import (
    PruneMask,
    PruneReport,
    compute_fr_pr,
    count_flops_params,
    propagate_and_apply,
    select_channels,
)
from .nn import ModelState, TrainSchedule, evaluate, forward, init_model, train
from .theory import CheckOutcome, run_all_checks
