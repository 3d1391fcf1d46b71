from .blocks import MambaBlock
from .checkpoint import checkpoint_bytes, copy_model, load_checkpoint, save_checkpoint
from .models import (CLASS_NAMES, VARIANTS, ConfigError, Model, ModelConfig, ModelOutput, build_model,
                     desk_preset, fuse, paper_preset)
from .module import Module
from .ssm import SsmParams, linear_scan, selective_scan, selective_scan_reference, ssm_scan

__all__ = [
    "CLASS_NAMES", "VARIANTS", "ConfigError", "MambaBlock", "Model", "ModelConfig", "ModelOutput",
    "Module", "SsmParams", "build_model", "checkpoint_bytes", "copy_model", "desk_preset", "fuse",
    "linear_scan", "load_checkpoint", "paper_preset", "save_checkpoint", "selective_scan",
    "selective_scan_reference", "ssm_scan",
]
