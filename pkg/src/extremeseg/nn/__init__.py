from .autodiff import Parameter, Tensor
from .train import (AugmentParams, TrainConfig, TrainingCase, TrainingDiverged,
                    UNetModel, augment_sample, fold_split, loss_dice_ce,
                    lr_poly, nesterov_step, train_fold,
                    training_case_from_preprocessed)
from .unet import UNet3D, UNetSpec, spec_from_plan
from .weights_io import load_ensemble, load_model, save_ensemble, save_model

__all__ = [
    "AugmentParams", "Parameter", "Tensor", "TrainConfig", "TrainingCase",
    "TrainingDiverged", "UNet3D", "UNetModel", "UNetSpec", "augment_sample",
    "fold_split", "load_ensemble", "load_model", "loss_dice_ce", "lr_poly",
    "nesterov_step", "save_ensemble", "save_model", "spec_from_plan",
    "train_fold", "training_case_from_preprocessed",
]
