"""Weather-driven line ratings from the IEEE 738 steady-state heat balance.

The ampacity holding a conductor at its rated temperature is

    I = sqrt((q_c + q_r - q_s) / R(T_avg))

and the DLR capacity factor is ``alpha = I(weather) / I(reference)``, the
reference being the static-rating worst case (40 degC, 0.5 m/s). With no
voltage in the DC model the power limit scales by the same factor.

All correlation coefficients live in :data:`IEEE738` (SI forms of the
standard: conductor diameter in m, temperatures in degC, elevation in m).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping

from .network import Network, WeatherSeries

DATA_DIR = Path(__file__).parent / "data"

IEEE738 = {
    # air properties at film temperature
    "visc_a": 1.458e-6, "visc_b": 273.0, "visc_c": 383.4,
    "rho_0": 1.293, "rho_he1": -1.525e-4, "rho_he2": 6.379e-9, "rho_t": 0.00367,
    "kf_0": 2.424e-2, "kf_1": 7.477e-5, "kf_2": -4.407e-9,
    # wind direction factor K_angle = a - cos(phi) + b cos(2 phi) + c sin(2 phi)
    "kangle_a": 1.194, "kangle_b": 0.194, "kangle_c": 0.368,
    # forced convection, low and high Reynolds forms
    "qc1_a": 1.01, "qc1_b": 1.35, "qc1_exp": 0.52,
    "qc2_a": 0.754, "qc2_exp": 0.6,
    # natural convection
    "qcn_a": 3.645, "qcn_rho_exp": 0.5, "qcn_d_exp": 0.75, "qcn_dt_exp": 1.25,
    # radiation
    "qr_a": 17.8,
    # clear-atmosphere total heat flux polynomial in solar altitude (deg)
    "qs_poly": (-42.2391, 63.8044, -1.9220, 3.46921e-2, -3.61118e-4, 1.94318e-6, -4.07608e-9),
    "ksolar_1": 1.148e-4, "ksolar_2": -1.108e-8,
    "declination_amp": 23.46,
}


class RatingError(ValueError):
    """No positive ampacity exists for the given conductor and weather."""


@dataclass(frozen=True)
class ConductorParams:
    diameter: float = 0.02814  # m
    emissivity: float = 0.8
    solar_absorptivity: float = 0.8
    resistance_low: float = 7.283e-5  # ohm/m at temp_low
    resistance_high: float = 8.688e-5  # ohm/m at temp_high
    temp_low: float = 25.0
    temp_high: float = 75.0
    max_conductor_temp: float = 100.0
    heat_capacity: float = 1310.0  # J/(m degC); transient only, unused here
    elevation: float = 0.0
    latitude: float = 30.0
    line_azimuth: float = 90.0

    def __post_init__(self):
        if not self.diameter > 0:
            raise ValueError("conductor diameter must be positive")
        if not (0 <= self.emissivity <= 1 and 0 <= self.solar_absorptivity <= 1):
            raise ValueError("emissivity and absorptivity must lie in [0, 1]")
        if not self.temp_high > self.temp_low:
            raise ValueError("temp_high must exceed temp_low")
        if not self.resistance_high >= self.resistance_low > 0:
            raise ValueError("need resistance_high >= resistance_low > 0")

    def resistance(self, temp: float) -> float:
        """AC resistance at ``temp`` by linear inter/extrapolation (ohm/m)."""
        slope = (self.resistance_high - self.resistance_low) / (self.temp_high - self.temp_low)
        return self.resistance_low + slope * (temp - self.temp_low)


@dataclass(frozen=True)
class RatingConditions:
    ambient_temp: float
    wind_speed: float
    wind_angle: float = 90.0  # degrees between wind and conductor axis
    solar: bool = False
    hour_of_day: float = 12.0
    day_of_year: int = 172

    def __post_init__(self):
        for v in (self.ambient_temp, self.wind_speed, self.wind_angle):
            if not math.isfinite(v):
                raise ValueError("rating conditions must be finite")
        if self.wind_speed < 0:
            raise ValueError("wind speed must be nonnegative")


SLR_REFERENCE = RatingConditions(ambient_temp=40.0, wind_speed=0.5)


@dataclass(frozen=True)
class RatingFactor:
    alpha: float
    i_dlr: float
    i_slr: float


@dataclass(frozen=True)
class RatingSeries:
    """Per-line hourly power limits (MW)."""

    limits: Mapping[int, tuple[tuple[int, float], ...]]
    alphas: Mapping[int, float] = field(default_factory=dict)  # hour -> alpha of default conductor

    def limit(self, line_id: int, hour: int) -> float:
        for h, p in self.limits[line_id]:
            if h == hour:
                return p
        raise KeyError(f"no rating for line {line_id} at hour {hour}")

    def at_hour(self, hour: int) -> dict[int, float]:
        return {lid: self.limit(lid, hour) for lid in self.limits}

    @property
    def hours(self) -> tuple[int, ...]:
        first = next(iter(self.limits.values()), ())
        return tuple(h for h, _ in first)


# ---------------------------------------------------------------------------
# heat balance terms
# ---------------------------------------------------------------------------
def air_properties(film_temp: float, elevation: float) -> tuple[float, float, float]:
    """(dynamic viscosity kg/m-s, density kg/m3, thermal conductivity W/m-degC)."""
    c = IEEE738
    mu = c["visc_a"] * (film_temp + c["visc_b"]) ** 1.5 / (film_temp + c["visc_c"])
    rho = (c["rho_0"] + c["rho_he1"] * elevation + c["rho_he2"] * elevation**2) / (1 + c["rho_t"] * film_temp)
    kf = c["kf_0"] + c["kf_1"] * film_temp + c["kf_2"] * film_temp**2
    return mu, rho, kf


def convective_loss(cond: ConductorParams, w: RatingConditions, t_cond: float) -> float:
    """q_c in W/m: the larger of forced (both Reynolds forms) and natural convection."""
    c = IEEE738
    dt = t_cond - w.ambient_temp
    if dt <= 0:
        return 0.0
    film = 0.5 * (t_cond + w.ambient_temp)
    mu, rho, kf = air_properties(film, cond.elevation)
    phi = math.radians(w.wind_angle)
    k_angle = c["kangle_a"] - math.cos(phi) + c["kangle_b"] * math.cos(2 * phi) + c["kangle_c"] * math.sin(2 * phi)
    reynolds = cond.diameter * rho * w.wind_speed / mu
    qc1 = k_angle * (c["qc1_a"] + c["qc1_b"] * reynolds ** c["qc1_exp"]) * kf * dt
    qc2 = k_angle * c["qc2_a"] * reynolds ** c["qc2_exp"] * kf * dt
    qcn = c["qcn_a"] * rho ** c["qcn_rho_exp"] * cond.diameter ** c["qcn_d_exp"] * dt ** c["qcn_dt_exp"]
    return max(qc1, qc2, qcn)


def radiative_loss(cond: ConductorParams, w: RatingConditions, t_cond: float) -> float:
    """q_r in W/m."""
    tk, ta = (t_cond + 273.0) / 100.0, (w.ambient_temp + 273.0) / 100.0
    return IEEE738["qr_a"] * cond.diameter * cond.emissivity * (tk**4 - ta**4)


def solar_position(latitude: float, day_of_year: int, hour: float) -> tuple[float, float]:
    """Solar altitude and azimuth in degrees."""
    lat = math.radians(latitude)
    decl = math.radians(IEEE738["declination_amp"] * math.sin(math.radians((284 + day_of_year) / 365 * 360)))
    omega = 15.0 * (hour - 12.0)
    w = math.radians(omega)
    alt = math.asin(math.cos(lat) * math.cos(decl) * math.cos(w) + math.sin(lat) * math.sin(decl))
    denom = math.sin(lat) * math.cos(w) - math.cos(lat) * math.tan(decl)
    chi = math.sin(w) / denom if denom != 0 else math.copysign(math.inf, math.sin(w) or 1.0)
    if omega < 0:
        const = 0.0 if chi >= 0 else 180.0
    else:
        const = 180.0 if chi >= 0 else 360.0
    return math.degrees(alt), const + math.degrees(math.atan(chi))


def solar_gain(cond: ConductorParams, w: RatingConditions) -> float:
    """q_s in W/m under the clear-atmosphere model; zero when disabled or at night."""
    if not w.solar:
        return 0.0
    alt, azi = solar_position(cond.latitude, w.day_of_year, w.hour_of_day)
    if alt <= 0:
        return 0.0
    flux = sum(a * alt**k for k, a in enumerate(IEEE738["qs_poly"]))
    k_solar = 1 + IEEE738["ksolar_1"] * cond.elevation + IEEE738["ksolar_2"] * cond.elevation**2
    theta = math.acos(math.cos(math.radians(alt)) * math.cos(math.radians(azi - cond.line_azimuth)))
    return cond.solar_absorptivity * max(flux * k_solar, 0.0) * math.sin(theta) * cond.diameter


def steady_state_current(cond: ConductorParams, w: RatingConditions) -> float:
    """Ampacity (A) that holds the conductor at ``max_conductor_temp``."""
    t = cond.max_conductor_temp
    net = convective_loss(cond, w, t) + radiative_loss(cond, w, t) - solar_gain(cond, w)
    r = cond.resistance(t)
    if not (net > 0 and r > 0) or not math.isfinite(net):
        raise RatingError(
            f"no positive rating at ambient {w.ambient_temp} degC, wind {w.wind_speed} m/s "
            f"(net cooling {net:.3g} W/m)"
        )
    return math.sqrt(net / r)


def rating_factor(cond: ConductorParams, w: RatingConditions, slr_ref: RatingConditions = SLR_REFERENCE) -> RatingFactor:
    i_dlr = steady_state_current(cond, w)
    i_slr = steady_state_current(cond, slr_ref)
    return RatingFactor(i_dlr / i_slr, i_dlr, i_slr)


# ---------------------------------------------------------------------------
# conductor config and series
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ConductorConfig:
    default: ConductorParams = ConductorParams()
    overrides: Mapping[int, ConductorParams] = field(default_factory=dict)

    def for_line(self, line_id: int) -> ConductorParams:
        return self.overrides.get(line_id, self.default)


def load_conductor_config(path: str | Path | None = None) -> ConductorConfig:
    """Read a conductor JSON file: ``{"default": {...}, "overrides": {"<line id>": {...}}}``.

    Fields missing from an override inherit from the default set.
    """
    path = Path(path) if path is not None else DATA_DIR / "conductor_drake.json"
    data = json.loads(path.read_text())
    default = ConductorParams(**data.get("default", {}))
    overrides = {
        int(k): replace(default, **v) for k, v in data.get("overrides", {}).items()
    }
    return ConductorConfig(default, overrides)


def conductor_config_to_dict(cfg: ConductorConfig) -> dict:
    return {
        "default": asdict(cfg.default),
        "overrides": {str(k): asdict(v) for k, v in sorted(cfg.overrides.items())},
    }


def build_rating_series(
    net: Network,
    weather: WeatherSeries,
    conductors: ConductorConfig | ConductorParams | None = None,
    slr_ref: RatingConditions = SLR_REFERENCE,
    hours=None,
    solar: bool = False,
) -> RatingSeries:
    """Hourly power limits: ``p_max_static * alpha(hour)`` on DLR lines, static elsewhere."""
    if conductors is None:
        conductors = ConductorConfig()
    elif isinstance(conductors, ConductorParams):
        conductors = ConductorConfig(conductors)
    hours = tuple(weather.hours if hours is None else hours)
    have = set(weather.hours)
    missing = [h for h in hours if h not in have]
    if missing:
        raise KeyError(f"weather series is missing hours {missing}")

    cache: dict[tuple[ConductorParams, int], float] = {}

    def alpha(cond: ConductorParams, hour: int) -> float:
        key = (cond, hour)
        if key not in cache:
            s = weather.at(hour)
            w = RatingConditions(s.ambient_temp, s.wind_speed, slr_ref.wind_angle, solar, hour, slr_ref.day_of_year)
            cache[key] = rating_factor(cond, w, slr_ref).alpha
        return cache[key]

    limits = {}
    for l in net.lines:
        if l.dlr_equipped:
            cond = conductors.for_line(l.id)
            limits[l.id] = tuple((h, l.p_max_static * alpha(cond, h)) for h in hours)
        else:
            limits[l.id] = tuple((h, l.p_max_static) for h in hours)
    alphas = {h: alpha(conductors.default, h) for h in hours}
    return RatingSeries(limits, alphas)


def static_series(net: Network, hours=range(24)) -> RatingSeries:
    return RatingSeries({l.id: tuple((h, l.p_max_static) for h in hours) for l in net.lines})
