"""Desk-scale lab for channel-triggered backdoors in learned JSCC image codecs."""

from ._mem import tune_allocator

tune_allocator()

from .tensor import Tensor, grad_check, mse_loss
from .channel import (AWGN, RAYLEIGH, ChannelRealization, ChannelSpec, TriggerSpec,
                      apply_channel, make_trigger, power_normalize, sample_realization,
                      snr_to_noise_power, spec_for_snr, transmit)
from .models import ArchDescriptor, JsccModel, build_model, decode, encode
from .optim import Adam, AdamState, adam_step, lr_schedule
from .rng import RandomStream

__version__ = "0.1.0"

__all__ = [
    "Tensor", "grad_check", "mse_loss",
    "AWGN", "RAYLEIGH", "ChannelSpec", "TriggerSpec", "ChannelRealization",
    "apply_channel", "make_trigger", "power_normalize", "sample_realization",
    "snr_to_noise_power", "spec_for_snr", "transmit",
    "ArchDescriptor", "JsccModel", "build_model", "decode", "encode",
    "Adam", "AdamState", "adam_step", "lr_schedule",
    "RandomStream",
    "__version__",
]
