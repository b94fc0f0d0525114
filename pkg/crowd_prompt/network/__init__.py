"""
Двухветвевая сеть регрессора плотности и сегментатора.
"""

from .base import BaseLayer, ChannelPlan
from .model import (
    ForwardTrace, GradCheckReport, ModelState, backward, expected_parameter_count,
    forward, grad_check, init_model, load_checkpoint, save_checkpoint
)

__all__ = [
    "BaseLayer",
    "ChannelPlan",
    "ForwardTrace",
    "GradCheckReport",
    "ModelState",
    "backward",
    "expected_parameter_count",
    "forward",
    "grad_check",
    "init_model",
    "load_checkpoint",
    "save_checkpoint"
]
