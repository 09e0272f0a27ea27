from .model import (GenUNet, NetworkConfig, apply_mixing, complex_l1_loss, geometry_features, split_complex,
                    to_complex, unet_forward)
from .train import ParameterStore, TrainConfig, train_loop

__all__ = ["GenUNet", "NetworkConfig", "ParameterStore", "TrainConfig", "apply_mixing", "complex_l1_loss",
           "geometry_features", "split_complex", "to_complex", "train_loop", "unet_forward"]
