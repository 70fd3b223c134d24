"""Rule-based adaptive controller: labels to sensing, feature mask and model key."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Protocol

from .features import FeatureCatalog, FeatureMask, MaskMode
from .monitor import ReliabilityLabel
from .signals import MODALITY_ORDER, ModalityKind, SensorStatus


class SensingState(str, enum.Enum):
    ON = "On"
    OFF = "Off"


class Command(str, enum.Enum):
    IDLE = "Idle"
    WAKE = "Wake"


@dataclass(frozen=True)
class SensingConfig:
    states: Mapping[ModalityKind, SensingState]

    def state(self, kind: ModalityKind) -> SensingState:
        return SensingState(self.states[kind])

    @property
    def enabled(self) -> tuple[ModalityKind, ...]:
        return tuple(k for k in MODALITY_ORDER
                     if k in self.states and self.state(k) is SensingState.ON)

    @property
    def disabled(self) -> tuple[ModalityKind, ...]:
        return tuple(k for k in MODALITY_ORDER
                     if k in self.states and self.state(k) is SensingState.OFF)


@dataclass(frozen=True, order=True)
class ModelKey:
    application: str
    modality_set: tuple[ModalityKind, ...]
    mask_signature: str

    @classmethod
    def for_mask(cls, application: str, mask: FeatureMask) -> "ModelKey":
        return cls(application.lower(), mask.active, mask.signature())

    def __str__(self):
        return f"{self.application}/{self.mask_signature}"


@dataclass(frozen=True)
class ControlDecision:
    labels: Mapping[ModalityKind, ReliabilityLabel]
    sensing: SensingConfig
    mask: FeatureMask
    model_key: ModelKey | None  # None means abstain: nothing left to infer from
    retention: Fraction
    feature_count: int

    @property
    def abstain(self) -> bool:
        return self.model_key is None


_MODE = {
    ReliabilityLabel.NOISY: MaskMode.EMPTY,
    ReliabilityLabel.UNCERTAIN: MaskMode.SUBSET,
    ReliabilityLabel.RELIABLE: MaskMode.FULL,
}


class Policy(Protocol):
    """Anything that maps one window's labels to a decision."""

    def __call__(self, labels: Mapping[ModalityKind, ReliabilityLabel],
                 catalog: FeatureCatalog, pool=None) -> ControlDecision: ...


def decide(labels: Mapping[ModalityKind, ReliabilityLabel], catalog: FeatureCatalog,
           pool=None) -> ControlDecision:
    """Noisy turns a sensor off, Uncertain keeps the uncertain subset, Reliable keeps all.

    When ``pool`` is given the chosen key must resolve in it exactly; a
    missing key raises ``ModelUnavailableError``.
    """
    missing = [k.value for k in catalog.modalities if k not in labels]
    if missing:
        raise ValueError(f"no label for {', '.join(missing)}")
    labels = {k: ReliabilityLabel.parse(labels[k]) for k in catalog.modalities}
    modes = {k: _MODE[lab] for k, lab in labels.items()}
    sensing = SensingConfig({
        k: SensingState.OFF if m is MaskMode.EMPTY else SensingState.ON for k, m in modes.items()
    })
    mask = FeatureMask(modes)
    key = ModelKey.for_mask(catalog.application, mask) if mask.active else None
    if key is not None and pool is not None and key not in pool:
        from .models import ModelUnavailableError
        raise ModelUnavailableError(f"pool has no model for {key}")
    return ControlDecision(labels, sensing, mask, key, mask.retention(catalog), mask.count(catalog))


def reconfigure(sensing: SensingConfig,
                status: Mapping[ModalityKind, SensorStatus]) -> dict[ModalityKind, Command]:
    """Commands that bring sensor ``status`` in line with ``sensing``; empty when already aligned."""
    out = {}
    for kind in MODALITY_ORDER:
        if kind not in sensing.states:
            continue
        current = SensorStatus(status.get(kind, SensorStatus.ATTACHED))
        want = sensing.state(kind)
        if want is SensingState.OFF and current is not SensorStatus.IDLE:
            out[kind] = Command.IDLE
        elif want is SensingState.ON and current is SensorStatus.IDLE:
            out[kind] = Command.WAKE
    return out


def apply_commands(status: Mapping[ModalityKind, SensorStatus],
                   commands: Mapping[ModalityKind, Command]) -> dict[ModalityKind, SensorStatus]:
    out = dict(status)
    for kind, cmd in commands.items():
        out[kind] = SensorStatus.IDLE if cmd is Command.IDLE else SensorStatus.ATTACHED
    return out


@dataclass
class Recovery:
    """Probe schedule for sensors the controller has switched off.

    A modality switched off at window ``w`` is probed at ``w + R``, ``w + 2R``,
    ... The probe window is sensed but not fused; if its label is Reliable or
    Uncertain the modality is re-enabled from the next window.
    """

    period: int = 5
    off_since: dict[ModalityKind, int] = field(default_factory=dict)
    pending: set[ModalityKind] = field(default_factory=set)

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("probe period must be >= 1")

    def is_off(self, kind: ModalityKind) -> bool:
        return kind in self.off_since and kind not in self.pending

    def probes(self, window: int) -> tuple[ModalityKind, ...]:
        """Off modalities that should be sensed (but not fused) at ``window``."""
        return tuple(k for k in MODALITY_ORDER if k in self.off_since and k not in self.pending
                     and window > self.off_since[k]
                     and (window - self.off_since[k]) % self.period == 0)

    def observe(self, window: int, labels: Mapping[ModalityKind, ReliabilityLabel],
                probed: tuple[ModalityKind, ...] = ()) -> tuple[ModalityKind, ...]:
        """Update state after ``window``; returns the modalities re-enabled for the next one."""
        self.pending.clear()
        for kind, lab in labels.items():
            lab = ReliabilityLabel.parse(lab)
            if kind in probed:
                if lab is not ReliabilityLabel.NOISY:
                    self.pending.add(kind)
            elif lab is ReliabilityLabel.NOISY and kind not in self.off_since:
                self.off_since[kind] = window
        for kind in self.pending:
            del self.off_since[kind]
        return tuple(k for k in MODALITY_ORDER if k in self.pending)


def recover(history: list[Mapping[ModalityKind, ReliabilityLabel]], period: int = 5) -> dict:
    """Replay a per-window label history through the probe rule.

    ``history[w]`` holds the label each modality would get at window ``w``.
    Returns ``{"off": [...], "probe": [...], "enabled": [...]}`` listing, per
    window, the modalities that were off, probed and re-enabled (effective next
    window).
    """
    rec = Recovery(period)
    trace: dict[str, list] = {"off": [], "probe": [], "enabled": []}
    for w, labels in enumerate(history):
        probes = rec.probes(w)
        off = tuple(k for k in MODALITY_ORDER if k in rec.off_since)
        # off sensors produce no label unless probed
        seen = {k: v for k, v in labels.items() if k not in off or k in probes}
        enabled = rec.observe(w, seen, probes)
        trace["off"].append(off)
        trace["probe"].append(probes)
        trace["enabled"].append(enabled)
    return trace
