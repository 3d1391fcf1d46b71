"""Gestational-age-at-birth regression from placental T2* maps with dual-branch U-Mamba networks.

Everything runs on a small numpy autograd engine; see ``puuma.autograd``.
"""

from .config import RunConfig, load_config, parse_config
from .nets import VARIANTS, Model, ModelConfig, build_model, desk_preset, paper_preset

__version__ = "0.1.0"

__all__ = ["Model", "ModelConfig", "RunConfig", "VARIANTS", "build_model", "desk_preset", "load_config",
           "paper_preset", "parse_config"]
