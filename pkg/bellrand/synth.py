"""
Synthetic two-station Bell experiment

Pairs arrive as a Poisson process and are measured at one fixed pair of
CHSH analyzer settings per run.  Gate 0 is the ``+`` outcome; station B
agrees with station A with probability ``(1 + E) / 2`` where
``E = V cos(2 (alpha - beta))``.  Every photon (pair or background) is
thinned by the efficiency of the detector it reaches and jittered by a
truncated Gaussian before the timestamps are quantized to the TDC
resolution.

"""
from __future__ import annotations

import dataclasses
import enum
import logging
import math
import typing

import numpy as np
import pydantic

from bellrand import errors, models, series, timetag

LOGGER = logging.getLogger(__name__)

PS_PER_SECOND = 10 ** 12
JITTER_TRUNCATION = 5.0


class Setting(str, enum.Enum):
    """Analyzer setting pair held fixed for a run"""
    A_B = 'a_b'
    A_BP = 'a_bp'
    AP_B = 'ap_b'
    AP_BP = 'ap_bp'

    @property
    def angles(self) -> typing.Tuple[float, float]:
        """Polarizer angles in degrees for stations A and B"""
        alpha = 45.0 if self.value.startswith('ap') else 0.0
        beta = 67.5 if self.value.endswith('bp') else 22.5
        return alpha, beta

    @property
    def sign(self) -> int:
        """Sign of this correlator in the CHSH combination"""
        return -1 if self is Setting.A_BP else 1


class SynthConfig(pydantic.BaseModel):
    visibility: float = 0.96
    pair_rate: float = 53_000.0
    background_singles_rate: float = 34_000.0
    efficiency: typing.Tuple[float, float, float, float] = (0.3, 0.3, 0.3,
                                                            0.3)
    jitter_sigma: float = 350.0
    duration: float = 10.0
    rng_seed: int = 0
    setting: Setting = Setting.A_B
    delay_ps: int = 0
    resolution: int = 10

    class Config:
        allow_mutation = False
        extra = pydantic.Extra.forbid

    @pydantic.validator('visibility')
    def _check_visibility(cls, value: float) -> float:
        if not 0.0 <= value <= 1.0:
            raise ValueError('visibility must be within [0, 1]')
        return value

    @pydantic.validator('pair_rate', 'background_singles_rate',
                        'jitter_sigma')
    def _check_non_negative(cls, value: float) -> float:
        if value < 0:
            raise ValueError('must not be negative')
        return value

    @pydantic.validator('efficiency')
    def _check_efficiency(cls, value):
        if any(not 0.0 < e <= 1.0 for e in value):
            raise ValueError('efficiencies must be within (0, 1]')
        return value

    @pydantic.validator('duration')
    def _check_duration(cls, value: float) -> float:
        if value <= 0:
            raise ValueError('duration must be positive')
        return value

    @pydantic.validator('resolution')
    def _check_resolution(cls, value: int) -> int:
        if value <= 0:
            raise ValueError('resolution must be positive')
        return value

    @property
    def nominal_s_chsh(self) -> float:
        return 2.0 * math.sqrt(2.0) * self.visibility

    @classmethod
    def build(cls, **values) -> SynthConfig:
        """Validate ``values``, raising
        :exc:`~bellrand.errors.InvalidConfig` on failure.

        """
        try:
            return cls(**values)
        except (pydantic.ValidationError, TypeError) as error:
            raise errors.InvalidConfig('Invalid simulation settings: %s',
                                       error)


@dataclasses.dataclass(frozen=True)
class ChshEstimate:
    s: float
    standard_error: float
    correlations: typing.Dict[str, float]


def correlation(visibility: float, setting: Setting) -> float:
    alpha, beta = setting.angles
    return visibility * math.cos(math.radians(2.0 * (alpha - beta)))


def _jitter(rng: np.random.Generator, sigma: float, size: int) -> np.ndarray:
    if sigma == 0 or not size:
        return np.zeros(size)
    values = rng.normal(0.0, sigma, size)
    outside = np.abs(values) > JITTER_TRUNCATION * sigma
    while outside.any():
        values[outside] = rng.normal(0.0, sigma, int(outside.sum()))
        outside = np.abs(values) > JITTER_TRUNCATION * sigma
    return values


def simulate_run(config: SynthConfig) -> models.EventStream:
    """Generate the detections of one run, deterministic in ``rng_seed``"""
    rng = np.random.default_rng(config.rng_seed)
    span = config.duration * PS_PER_SECOND
    efficiency = np.asarray(config.efficiency)
    agree = (1.0 + correlation(config.visibility, config.setting)) / 2.0

    pairs = rng.poisson(config.pair_rate * config.duration)
    emitted = np.sort(rng.uniform(0.0, span, pairs))
    gate_a = rng.integers(0, 2, pairs)
    gate_b = np.where(rng.random(pairs) < agree, gate_a, 1 - gate_a)
    channel_a = gate_a + models.Channel.A0
    channel_b = gate_b + models.Channel.B0
    seen_a = rng.random(pairs) < efficiency[channel_a]
    seen_b = rng.random(pairs) < efficiency[channel_b]

    times = [emitted[seen_a] + _jitter(rng, config.jitter_sigma,
                                       int(seen_a.sum())),
             emitted[seen_b] + config.delay_ps + _jitter(
                 rng, config.jitter_sigma, int(seen_b.sum()))]
    channels = [channel_a[seen_a], channel_b[seen_b]]
    for first in (models.Channel.A0, models.Channel.B0):
        count = rng.poisson(config.background_singles_rate * config.duration)
        channel = first + rng.integers(0, 2, count)
        seen = rng.random(count) < efficiency[channel]
        times.append(rng.uniform(0.0, span, count)[seen])
        channels.append(channel[seen])

    timestamps = np.concatenate(times)
    channels = np.concatenate(channels).astype(np.uint8)
    timestamps = (np.rint(np.clip(timestamps, 0.0, None) / config.resolution)
                  .astype(np.int64) * config.resolution)
    order = np.lexsort((channels, timestamps))
    meta = models.RunMetadata.build(
        nominal_s_chsh=min(config.nominal_s_chsh, models.MAX_S_CHSH),
        duration=config.duration, resolution=config.resolution,
        label=(f'synthetic V={config.visibility} seed={config.rng_seed} '
               f'setting={config.setting.value}'))
    LOGGER.debug('Simulated %i pairs, %i detections', pairs, order.size)
    return models.EventStream(timestamps[order], channels[order], meta)


def outcome_counts(stream: models.EventStream,
                   coincidences: models.CoincidenceSet) -> np.ndarray:
    """2x2 table of coincidence counts indexed by ``[gate_a][gate_b]``"""
    gates_a = timetag.station_events(stream, models.Station.A).gates
    gates_b = timetag.station_events(stream, models.Station.B).gates
    counts = np.zeros((2, 2), dtype=np.int64)
    np.add.at(counts, (gates_a[coincidences.index_a],
                       gates_b[coincidences.index_b]), 1)
    return counts


def estimate_chsh(counts: typing.Mapping[typing.Union[Setting, str],
                                         np.ndarray]) -> ChshEstimate:
    """CHSH combination of the four setting-pair correlators.

    :param counts: 2x2 ``[gate_a][gate_b]`` coincidence counts per setting
    :raises: :exc:`~bellrand.errors.EmptyCounts`

    """
    total_s, variance, correlations = 0.0, 0.0, {}
    for setting in Setting:
        table = counts.get(setting, counts.get(setting.value))
        if table is None:
            raise errors.EmptyCounts('No counts for setting %s',
                                     setting.value)
        table = np.asarray(table, dtype=np.float64)
        n = table.sum()
        if n <= 0:
            raise errors.EmptyCounts('No coincidences for setting %s',
                                     setting.value)
        e = (table[0, 0] + table[1, 1] - table[0, 1] - table[1, 0]) / n
        correlations[setting.value] = float(e)
        total_s += setting.sign * e
        variance += (1.0 - e * e) / n
    return ChshEstimate(abs(total_s), math.sqrt(variance), correlations)


def measure_chsh(config: SynthConfig,
                 window_ps: int = series.DEFAULT_WINDOW_PS) -> ChshEstimate:
    """Simulate one run per setting pair and estimate S from coincidences"""
    counts = {}
    for offset, setting in enumerate(Setting):
        run = config.copy(update={'setting': setting,
                                  'rng_seed': config.rng_seed + offset})
        stream = simulate_run(run)
        coincidences = series.find_coincidences(
            timetag.station_events(stream, models.Station.A),
            timetag.station_events(stream, models.Station.B),
            window_ps, config.delay_ps)
        counts[setting] = outcome_counts(stream, coincidences)
    estimate = estimate_chsh(counts)
    LOGGER.info('Estimated S=%.4f +/- %.4f (nominal %.4f)', estimate.s,
                estimate.standard_error, config.nominal_s_chsh)
    return estimate
