"""
Run configuration shared by all CLI subcommands.

The document is JSON with the sections ``burst``, ``plant``,
``acquisition``, ``peaks``, ``windows``, ``thermal`` and ``campaign``;
every section and key is optional and unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources

from .channel import (REFERENCE_LABEL, FiberPlant, Reflector, TraceAcquisition,
                      default_plant_from_paper)
from .correlator import PeakDetectConfig, windows_around
from .errors import FormatError, InvalidArgumentError
from .signal import BurstSpec, PhysicalConstants, PrbsSpec, SampledWaveform, build_burst
from .synthetic import DEFAULT_START_S
from .thermal import TauGrid


class ConfigError(FormatError):
    """The configuration document is malformed or violates a precondition."""


@dataclass(frozen=True)
class BurstConfig:
    register_length: int = 7
    feedback_taps: tuple = (7, 6)
    seed: object = None
    bit_rate_bps: float = 10e9
    packet_duration_ps: float = 1e8
    sample_rate_hz: float = 50e9

    def spec(self) -> BurstSpec:
        prbs = PrbsSpec(self.register_length, tuple(self.feedback_taps), self.seed)
        return BurstSpec(prbs, self.bit_rate_bps, self.packet_duration_ps)

    def build(self) -> SampledWaveform:
        return build_burst(self.spec(), self.sample_rate_hz)


@dataclass(frozen=True)
class PlantConfig:
    """Either the built-in four-fibre layout or an explicit reflector list."""

    preset: str | None = "paper"
    group_index: float = 1.4682
    cable_length_m: float = 8500.0
    jumper_length_m: float = 25.0
    trims_ps: dict | None = None
    reference_amplitude: float = 0.2
    fiber_amplitude: float = 1.0
    reflectors: list | None = None
    receiver_bandwidth_hz: float = 7.5e9
    noise_sigma: float = 1.0
    rng_seed: int = 0

    def build(self, seed: int | None = None, noise_sigma: float | None = None) -> FiberPlant:
        seed = self.rng_seed if seed is None else seed
        sigma = self.noise_sigma if noise_sigma is None else noise_sigma
        if self.reflectors is not None:
            refl = tuple(Reflector(**r) for r in self.reflectors)
            return FiberPlant(refl, self.receiver_bandwidth_hz, sigma, seed)
        if self.preset != "paper":
            raise InvalidArgumentError(f"unknown plant preset {self.preset!r}")
        return default_plant_from_paper(
            PhysicalConstants(default_group_index=self.group_index), self.cable_length_m,
            self.jumper_length_m, self.trims_ps, self.reference_amplitude, self.fiber_amplitude,
            self.receiver_bandwidth_hz, sigma, seed,
        )


@dataclass(frozen=True)
class WindowsConfig:
    """Per-fibre lag windows: ``nominal +- tolerance``, kept disjoint.

    Without ``nominal_ps`` the configured plant's latencies are used.
    """

    tolerance_ps: float = 40.0
    nominal_ps: dict | None = None

    def build(self, plant: FiberPlant) -> dict:
        nominal = dict(self.nominal_ps) if self.nominal_ps is not None else plant.latencies()
        if REFERENCE_LABEL not in nominal:
            raise InvalidArgumentError("window set needs a 'reference' entry")
        return windows_around(nominal, self.tolerance_ps)


@dataclass(frozen=True)
class ThermalConfig:
    tau_lo_days: float = 0.5
    tau_hi_days: float = 50.0
    tau_points: int = 60
    reference_rtt_ps: float | None = None
    fit_fiber: str = "fiber1"
    tdc_mismatch_fraction: float = 0.01
    projection_days: float = 365.0
    align_tolerance_s: float = 60.0

    def grid(self) -> TauGrid:
        return TauGrid(self.tau_lo_days, self.tau_hi_days, self.tau_points)


@dataclass(frozen=True)
class CampaignConfig:
    """Synthetic multi-day monitoring run driven by a synthetic air record."""

    start_s: float = DEFAULT_START_S
    spinup_days: float = 187.0
    duration_days: float = 14.0
    air_days: float = 550.0
    interval_s: float = 600.0
    noise_ps: float = 5.0
    tau_days: float = 12.7
    tdc_ppm_per_k: dict = field(default_factory=lambda: {
        "fiber1": 7.5, "fiber2": 7.575, "fiber3": 7.5, "fiber4": 7.5})
    gap_start_days: float | None = 6.0
    gap_days: float = 0.5
    station_id: int = 44
    mean_c: float = 10.0
    annual_pk_pk_k: float = 27.0
    daily_amplitude_k: float = 4.0
    weather_sigma_k: float = 3.5
    weather_corr_days: float = 3.0

    @property
    def campaign_start_s(self) -> float:
        return self.start_s + self.spinup_days * 86_400.0


@dataclass(frozen=True)
class RunConfig:
    burst: BurstConfig = field(default_factory=BurstConfig)
    plant: PlantConfig = field(default_factory=PlantConfig)
    acquisition: TraceAcquisition = field(default_factory=TraceAcquisition)
    peaks: PeakDetectConfig = field(default_factory=PeakDetectConfig)
    windows: WindowsConfig = field(default_factory=WindowsConfig)
    thermal: ThermalConfig = field(default_factory=ThermalConfig)
    campaign: CampaignConfig = field(default_factory=CampaignConfig)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a JSON object")
        sections = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(doc) - set(sections)
        if unknown:
            raise ConfigError(f"unknown configuration section(s): {sorted(unknown)}")
        kw = {}
        for name, value in doc.items():
            section_cls = sections[name].default_factory().__class__
            kw[name] = _section(section_cls, value, name)
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(doc)

    @classmethod
    def paper(cls) -> "RunConfig":
        """The bundled ``paper.cfg``."""
        text = resources.files("cotdr").joinpath("data/paper.cfg").read_text(encoding="utf-8")
        return cls.from_dict(json.loads(text))

    def validate(self) -> None:
        """Construct every derived object once so bad settings fail early."""
        try:
            self.burst.spec()
            plant = self.plant.build()
            self.windows.build(plant)
            self.thermal.grid()
        except (InvalidArgumentError, TypeError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _section(section_cls, value, name):
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be an object")
    names = {f.name for f in dataclasses.fields(section_cls)}
    unknown = set(value) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in section {name!r}: {sorted(unknown)}")
    try:
        return section_cls(**value)
    except (InvalidArgumentError, TypeError) as exc:
        raise ConfigError(f"section {name!r}: {exc}") from None
