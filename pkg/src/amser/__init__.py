"""Adaptive multimodal sensing simulator.

Synthetic physiological windows are corrupted with baseline wander and motion
artifacts, labelled by a signal monitor, and routed through a rule-based
controller that picks sensors, features and a model from a pre-trained pool.
"""

from .signals import MODALITY_ORDER, ModalityKind, SensorSpec, SensorStatus, SignalWindow

__all__ = ["MODALITY_ORDER", "ModalityKind", "SensorSpec", "SensorStatus", "SignalWindow"]
__version__ = "0.1.0"
