from .engine import DiffusionEngine, EngineConfig, images_to_tensor, tensor_to_images
from .schedule import DiffusionSchedule, forward_diffuse
from .training import (
    ControlNetHyper,
    diffusion_loss,
    pretrain_autoencoder,
    pretrain_backbone,
    train_controlnet,
)

__all__ = [
    "ControlNetHyper", "DiffusionEngine", "DiffusionSchedule", "EngineConfig",
    "diffusion_loss", "forward_diffuse", "images_to_tensor", "pretrain_autoencoder",
    "pretrain_backbone", "tensor_to_images", "train_controlnet",
]
