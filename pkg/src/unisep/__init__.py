"""unisep: unified sound separation and clue-driven target sound extraction.

One separator backbone runs either from automatically inferred attractor
embeddings (unknown source count) or from fused multi-modal clue
embeddings, with the two embedding families aligned into a shared latent
space during training.
"""

__version__ = "0.1.0"

from .audio import Waveform, read_wav, write_wav
from .clues import MODALITIES, MODALITY_CYCLE, ClueBundle
from .config import GlobalConfig, load_config, make_config
from .inference import SeparationResult, extract, separate
from .model import SeparationModel, build_model
from .seeding import SeedRegistry, seed_everything

__all__ = [
    "__version__",
    "Waveform",
    "read_wav",
    "write_wav",
    "MODALITIES",
    "MODALITY_CYCLE",
    "ClueBundle",
    "GlobalConfig",
    "load_config",
    "make_config",
    "SeparationResult",
    "extract",
    "separate",
    "SeparationModel",
    "build_model",
    "SeedRegistry",
    "seed_everything",
]
