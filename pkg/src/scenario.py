"""Scenario files: a small line-oriented `[section]` / `key = value` format.

Example:

    [sim]
    duration_s = 150
    vdt = on

    [vehicle.defaults]
    init_v_mps = 33

    [vehicle.1]
    init_pos_m = 1000

    [vehicle.2]
    init_pos_m = 750

    [leader.profile]
    event = 30 18
    event = 90 33

Unknown sections and keys are rejected. Syntax problems raise
ScenarioParseError with the line number; values that break a model
invariant raise ScenarioSemanticError naming the section.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from pydantic import BaseModel, ValidationError

from src.platoon_sim import LeaderProfile, SimConfig, VehicleSpec, World
from src.thresholds import VehicleParams
from src.v2v_channel import ChannelParams
from src.vdt import VdtParams

logger = logging.getLogger(__name__)


class ScenarioParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ScenarioSemanticError(ValueError):
    def __init__(self, section: str, message: str):
        super().__init__(f"[{section}] {message}")
        self.section = section


_TRUE = {"on", "true", "yes", "1"}
_FALSE = {"off", "false", "no", "0"}


def _to_bool(value: str) -> bool:
    lowered = value.lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ValueError(f"expected on/off, got {value!r}")


def _to_int(value: str) -> int:
    if not re.fullmatch(r"[+-]?\d+", value):
        raise ValueError(f"expected an integer, got {value!r}")
    return int(value)


def _to_float(value: str) -> float:
    if "," in value:
        raise ValueError(f"expected a number with '.' as decimal point, got {value!r}")
    return float(value)


# file key -> (model field, converter)
SIM_KEYS: Dict[str, Tuple[str, Callable[[str], object]]] = {
    "duration_s": ("duration", _to_float),
    "dt_s": ("dt", _to_float),
    "vdt": ("vdt_enabled", _to_bool),
    "sample_every": ("sample_every", _to_int),
    "zeno_window_s": ("zeno_window", _to_float),
    "zeno_limit": ("zeno_limit", _to_int),
    "seed": ("seed", _to_int),
    "leader_from_channel": ("leader_from_channel", _to_bool),
    "sliding": ("sliding", _to_bool),
    "settle_tol_mps": ("settle_tol", _to_float),
}
CHANNEL_KEYS = {
    "radio_range_m": ("radio_range", _to_float),
    "hop_delay_s": ("hop_delay", _to_float),
    "broadcast_period_s": ("broadcast_period", _to_float),
    "max_end_to_end_s": ("max_end_to_end", _to_float),
    "relay_processing_s": ("relay_processing", _to_float),
    "jitter_s": ("jitter", _to_float),
    "enabled": ("enabled", _to_bool),
}
VDT_KEYS = {
    "gamma": ("gamma", _to_float),
    "alpha_t_max": ("alpha_t_max", _to_float),
    "alpha_t_0": ("alpha_t_0", _to_float),
    "staleness_s": ("staleness_limit", _to_float),
    "update_period_s": ("update_period", _to_float),
    "neighborhood": ("neighborhood", str),
    "sample_range_m": ("sample_range", _to_float),
}
# VehicleParams keys use the field alias ("lambda" rather than "lambda_").
PARAM_KEYS = {
    (info.alias or name): (name, _to_float) for name, info in VehicleParams.model_fields.items()
}
VEHICLE_KEYS = {
    "init_pos_m": ("init_pos", _to_float),
    "init_v_mps": ("init_v", _to_float),
    **PARAM_KEYS,
}
PROFILE_KEYS = {"k_lead": ("k_lead", _to_float)}

_VEHICLE_SECTION = re.compile(r"vehicle\.(\d+)")


@dataclass(frozen=True)
class ScenarioFile:
    config: SimConfig
    vehicles: Tuple[VehicleSpec, ...]
    profile: LeaderProfile
    source: Optional[str] = field(default=None, compare=False)

    def with_overrides(
        self,
        vdt: Optional[bool] = None,
        dt: Optional[float] = None,
        seed: Optional[int] = None,
    ) -> "ScenarioFile":
        """Copy with command-line overrides applied to the run configuration."""
        update = {}
        if vdt is not None:
            update["vdt_enabled"] = vdt
        if dt is not None:
            update["dt"] = dt
        if seed is not None:
            update["seed"] = seed
        if not update:
            return self
        config = SimConfig.model_validate({**self.config.model_dump(), **update})
        return ScenarioFile(config, self.vehicles, self.profile, self.source)


_Entry = Tuple[str, int]  # raw value, line number


def _tokenize(text: str) -> Tuple[Dict[str, Dict[str, _Entry]], List[Tuple[float, float]], Dict[str, int]]:
    sections: Dict[str, Dict[str, _Entry]] = {}
    header_lines: Dict[str, int] = {}
    events: List[Tuple[float, float]] = []
    current: Optional[str] = None

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or not line[1:-1].strip():
                raise ScenarioParseError(line_no, f"malformed section header {line!r}")
            current = line[1:-1].strip()
            if current in sections:
                raise ScenarioParseError(line_no, f"section [{current}] appears twice")
            sections[current] = {}
            header_lines[current] = line_no
            continue
        if "=" not in line:
            raise ScenarioParseError(line_no, f"expected 'key = value', got {line!r}")
        if current is None:
            raise ScenarioParseError(line_no, "key outside of any section")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ScenarioParseError(line_no, f"empty key or value in {line!r}")
        if current == "leader.profile" and key == "event":
            parts = value.split()
            if len(parts) != 2:
                raise ScenarioParseError(line_no, f"event needs '<t_s> <v_mps>', got {value!r}")
            try:
                events.append((_to_float(parts[0]), _to_float(parts[1])))
            except ValueError as e:
                raise ScenarioParseError(line_no, str(e)) from e
            continue
        if key in sections[current]:
            raise ScenarioParseError(line_no, f"duplicate key {key!r} in [{current}]")
        sections[current][key] = (value, line_no)
    return sections, events, header_lines


def _convert(
    section: str, entries: Dict[str, _Entry], keys: Dict[str, Tuple[str, Callable[[str], object]]]
) -> Dict[str, object]:
    out: Dict[str, object] = {}
    for key, (value, line_no) in entries.items():
        if key not in keys:
            raise ScenarioSemanticError(section, f"unknown key {key!r}")
        name, conv = keys[key]
        try:
            out[name] = conv(value)
        except ValueError as e:
            raise ScenarioParseError(line_no, f"{key}: {e}") from e
    return out


def _validated(section: str, model: type[BaseModel], values: Dict[str, object]):
    try:
        return model.model_validate(values)
    except ValidationError as e:
        reasons = "; ".join(err["msg"] for err in e.errors())
        raise ScenarioSemanticError(section, reasons) from e


def parse_scenario(text: str, defaults: Optional[SimConfig] = None) -> ScenarioFile:
    """Parse scenario text.

    `defaults` supplies the run settings for [sim] keys the file leaves out.
    """
    sections, events, header_lines = _tokenize(text)

    vehicle_sections: Dict[int, str] = {}
    for name in sections:
        match = _VEHICLE_SECTION.fullmatch(name)
        if match:
            vehicle_sections[int(match.group(1))] = name
        elif name not in ("sim", "channel", "vdt", "vehicle.defaults", "leader.profile"):
            raise ScenarioSemanticError(name, "unknown section")
    if events and "leader.profile" not in sections:
        raise ScenarioSemanticError("leader.profile", "events outside the profile section")

    base = (defaults or SimConfig()).model_dump()
    vdt = _validated("vdt", VdtParams, {**base["vdt"], **_convert("vdt", sections.get("vdt", {}), VDT_KEYS)})
    channel = _validated(
        "channel",
        ChannelParams,
        {**base["channel"], **_convert("channel", sections.get("channel", {}), CHANNEL_KEYS)},
    )
    sim_values = {**base, **_convert("sim", sections.get("sim", {}), SIM_KEYS), "vdt": vdt, "channel": channel}
    config = _validated("sim", SimConfig, sim_values)

    if not vehicle_sections:
        raise ScenarioSemanticError("vehicle.1", "at least one vehicle is required")
    expected = list(range(1, len(vehicle_sections) + 1))
    if sorted(vehicle_sections) != expected:
        raise ScenarioSemanticError(
            "vehicle", f"vehicle sections must be numbered 1..N, got {sorted(vehicle_sections)}"
        )

    defaults_entries = sections.get("vehicle.defaults", {})
    if "init_pos_m" in defaults_entries:
        raise ScenarioSemanticError("vehicle.defaults", "init_pos_m must be set per vehicle")
    shared = _convert("vehicle.defaults", defaults_entries, VEHICLE_KEYS)

    vehicles: List[VehicleSpec] = []
    for k in expected:
        section = vehicle_sections[k]
        values = {**shared, **_convert(section, sections[section], VEHICLE_KEYS)}
        for required, key in (("init_pos", "init_pos_m"), ("init_v", "init_v_mps")):
            if required not in values:
                raise ScenarioSemanticError(section, f"missing {key}")
        init_pos = values.pop("init_pos")
        init_v = values.pop("init_v")
        params = _validated(section, VehicleParams, values)
        if not 0.0 <= init_v <= params.v_max:
            raise ScenarioSemanticError(section, f"init_v_mps {init_v} outside [0, v_max={params.v_max}]")
        if vehicles and not init_pos < vehicles[-1].init_pos:
            raise ScenarioSemanticError(
                section, f"init_pos_m {init_pos} must be behind vehicle {k - 1} at {vehicles[-1].init_pos}"
            )
        vehicles.append(VehicleSpec(id=k, params=params, init_pos=init_pos, init_v=init_v))

    profile_values = _convert("leader.profile", sections.get("leader.profile", {}), PROFILE_KEYS)
    profile = _validated(
        "leader.profile",
        LeaderProfile,
        {**profile_values, "events": tuple(events), "initial_speed": vehicles[0].init_v},
    )
    leader_v_max = vehicles[0].params.v_max
    for event_t, speed in profile.events:
        if speed > leader_v_max:
            raise ScenarioSemanticError(
                "leader.profile", f"target {speed} at t={event_t} exceeds v_max={leader_v_max}"
            )

    logger.debug(f"Parsed scenario with {len(vehicles)} vehicles and {len(events)} profile events")
    return ScenarioFile(config=config, vehicles=tuple(vehicles), profile=profile)


def load_scenario(path: Path | str, defaults: Optional[SimConfig] = None) -> ScenarioFile:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    scenario = parse_scenario(text, defaults)
    return ScenarioFile(scenario.config, scenario.vehicles, scenario.profile, source=str(path))


def _on_off(flag: bool) -> str:
    return "on" if flag else "off"


def serialize_scenario(scenario: ScenarioFile) -> str:
    """Write every setting explicitly; parse_scenario reads the result back unchanged."""
    cfg = scenario.config
    lines = [
        "[sim]",
        f"duration_s = {cfg.duration!r}",
        f"dt_s = {cfg.dt!r}",
        f"vdt = {_on_off(cfg.vdt_enabled)}",
        f"sample_every = {cfg.sample_every}",
        f"zeno_window_s = {cfg.zeno_window!r}",
        f"zeno_limit = {cfg.zeno_limit}",
        f"seed = {cfg.seed}",
        f"leader_from_channel = {_on_off(cfg.leader_from_channel)}",
        f"sliding = {_on_off(cfg.sliding)}",
        f"settle_tol_mps = {cfg.settle_tol!r}",
        "",
        "[channel]",
        f"radio_range_m = {cfg.channel.radio_range!r}",
        f"hop_delay_s = {cfg.channel.hop_delay!r}",
        f"broadcast_period_s = {cfg.channel.broadcast_period!r}",
        f"max_end_to_end_s = {cfg.channel.max_end_to_end!r}",
        f"relay_processing_s = {cfg.channel.relay_processing!r}",
        f"jitter_s = {cfg.channel.jitter!r}",
        f"enabled = {_on_off(cfg.channel.enabled)}",
        "",
        "[vdt]",
        f"gamma = {cfg.vdt.gamma!r}",
        f"alpha_t_max = {cfg.vdt.alpha_t_max!r}",
        f"alpha_t_0 = {cfg.vdt.alpha_t_0!r}",
        f"staleness_s = {cfg.vdt.staleness_limit!r}",
        f"update_period_s = {cfg.vdt.update_period!r}",
        f"neighborhood = {cfg.vdt.neighborhood}",
        f"sample_range_m = {cfg.vdt.sample_range!r}",
    ]
    for spec in scenario.vehicles:
        lines += ["", f"[vehicle.{spec.id}]", f"init_pos_m = {spec.init_pos!r}", f"init_v_mps = {spec.init_v!r}"]
        for key, value in spec.params.model_dump(by_alias=True).items():
            lines.append(f"{key} = {value!r}")
    lines += ["", "[leader.profile]", f"k_lead = {scenario.profile.k_lead!r}"]
    for event_t, speed in scenario.profile.events:
        lines.append(f"event = {event_t!r} {speed!r}")
    return "\n".join(lines) + "\n"


def build_world(scenario: ScenarioFile) -> World:
    return World.from_specs(scenario.config, scenario.vehicles, scenario.profile)
