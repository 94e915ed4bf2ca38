"""
Domain models shared by every stage of the pipeline

Detection streams and derived series are immutable containers around
numpy arrays so that they can be handed to worker processes and
threads without copying concerns.

"""
from __future__ import annotations

import dataclasses
import enum
import logging
import math
import typing

import numpy as np
import pydantic

from bellrand import errors

LOGGER = logging.getLogger(__name__)

MAX_S_CHSH = 2.0 * math.sqrt(2.0)


class Station(str, enum.Enum):
    A = 'A'
    B = 'B'
    JOINT = 'joint'


class SeriesClass(str, enum.Enum):
    """Which detections a series is built from"""
    CO = 'CO'
    SO = 'SO'
    AL = 'AL'


class Kind(str, enum.Enum):
    """Whether a series holds gate outcomes or thresholded time deltas"""
    OUT = 'OUT'
    TD = 'TD'


class Channel(enum.IntEnum):
    A0 = 0
    A1 = 1
    B0 = 2
    B1 = 3

    @property
    def station(self) -> Station:
        return Station.A if self.value < 2 else Station.B

    @property
    def gate(self) -> int:
        return self.value & 1

    @classmethod
    def for_station(cls, station: Station, gate: int) -> Channel:
        return cls((0 if station == Station.A else 2) + gate)


class RunMetadata(pydantic.BaseModel):
    """Per-run facts recorded alongside the detections"""
    nominal_s_chsh: float = 0.0
    duration: float = 0.0
    resolution: int = 10
    label: str = ''

    class Config:
        allow_mutation = False
        extra = pydantic.Extra.forbid

    @pydantic.validator('nominal_s_chsh')
    def _check_s_chsh(cls, value: float) -> float:
        if not 0.0 <= value <= MAX_S_CHSH + 1e-12:
            raise ValueError('nominal_s_chsh must be within [0, 2*sqrt(2)]')
        return value

    @pydantic.validator('resolution')
    def _check_resolution(cls, value: int) -> int:
        if value <= 0:
            raise ValueError('resolution must be positive')
        return value

    @pydantic.validator('duration')
    def _check_duration(cls, value: float) -> float:
        if value < 0:
            raise ValueError('duration must not be negative')
        return value

    @classmethod
    def build(cls, **values) -> RunMetadata:
        """Create an instance, raising :exc:`~bellrand.errors.InvalidMetadata`
        instead of a pydantic error.

        """
        try:
            return cls(**values)
        except (pydantic.ValidationError, TypeError) as error:
            raise errors.InvalidMetadata('Invalid run metadata: %s', error)


@dataclasses.dataclass(frozen=True)
class DetectionEvent:
    timestamp: int
    channel: Channel

    def __post_init__(self):
        if self.timestamp < 0:
            raise errors.MalformedRecord(
                'Negative timestamp %s', self.timestamp)
        try:
            channel = Channel(self.channel)
        except ValueError:
            raise errors.MalformedRecord('Invalid channel %r', self.channel)
        object.__setattr__(self, 'channel', channel)


def _frozen(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


@dataclasses.dataclass(frozen=True, eq=False)
class EventStream:
    """Time ordered detections of a single run

    Timestamps are integer picoseconds since the start of the file and
    channels are :class:`Channel` codes.

    """
    timestamps: np.ndarray
    channels: np.ndarray
    meta: RunMetadata = dataclasses.field(default_factory=RunMetadata)

    def __post_init__(self):
        timestamps = np.array(self.timestamps, dtype=np.int64, copy=True)
        channels = np.array(self.channels, dtype=np.uint8, copy=True)
        if timestamps.ndim != 1 or timestamps.shape != channels.shape:
            raise errors.InconsistentInputs(
                'timestamps and channels must be 1-d arrays of equal length')
        if timestamps.size and timestamps.min() < 0:
            raise errors.MalformedRecord('Negative timestamp in stream')
        if channels.size and channels.max() > Channel.B1:
            raise errors.MalformedRecord('Invalid channel code in stream')
        decreasing = np.flatnonzero(np.diff(timestamps) < 0)
        if decreasing.size:
            raise errors.NonMonotonic(
                'Timestamp decreases at event %i (%i after %i)',
                decreasing[0] + 1, timestamps[decreasing[0] + 1],
                timestamps[decreasing[0]])
        object.__setattr__(self, 'timestamps', _frozen(timestamps))
        object.__setattr__(self, 'channels', _frozen(channels))

    @classmethod
    def from_events(cls, events: typing.Iterable[DetectionEvent],
                    meta: typing.Optional[RunMetadata] = None) -> EventStream:
        events = list(events)
        return cls(np.fromiter((e.timestamp for e in events), np.int64,
                               len(events)),
                   np.fromiter((e.channel for e in events), np.uint8,
                               len(events)),
                   meta or RunMetadata())

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def __iter__(self) -> typing.Iterator[DetectionEvent]:
        for timestamp, channel in zip(self.timestamps.tolist(),
                                      self.channels.tolist()):
            yield DetectionEvent(timestamp, Channel(channel))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (self.meta == other.meta
                and np.array_equal(self.timestamps, other.timestamps)
                and np.array_equal(self.channels, other.channels))


@dataclasses.dataclass(frozen=True, eq=False)
class StationEvents:
    """One station's detections with their positions in the source stream"""
    station: Station
    timestamps: np.ndarray
    gates: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def take(self, selector: np.ndarray) -> StationEvents:
        return StationEvents(self.station, self.timestamps[selector],
                             self.gates[selector], self.indices[selector])


@dataclasses.dataclass(frozen=True)
class Provenance:
    series_class: SeriesClass
    kind: Kind
    station: Station
    threshold_ps: typing.Optional[int] = None
    extracted: bool = False
    label: str = ''

    @property
    def key(self) -> str:
        """Short name such as ``CO+TD`` or ``AL+OUT(A)``"""
        name = f'{self.series_class.value}+{self.kind.value}'
        if self.station != Station.JOINT:
            name = f'{name}({self.station.value})'
        return f'{name}[extracted]' if self.extracted else name

    def as_dict(self) -> dict:
        return {'class': self.series_class.value,
                'kind': self.kind.value,
                'station': self.station.value,
                'threshold_ps': self.threshold_ps,
                'extracted': self.extracted,
                'label': self.label}

    @classmethod
    def from_dict(cls, value: dict) -> Provenance:
        try:
            return cls(SeriesClass(value['class']), Kind(value['kind']),
                       Station(value['station']), value.get('threshold_ps'),
                       bool(value.get('extracted', False)),
                       value.get('label', ''))
        except (KeyError, ValueError) as error:
            raise errors.InvalidMetadata('Invalid provenance: %s', error)


UNKNOWN_PROVENANCE = Provenance(SeriesClass.AL, Kind.OUT, Station.JOINT)


def as_bits(value: typing.Union[BitSeries, np.ndarray, str,
                                typing.Sequence[int]]) -> np.ndarray:
    """Return a uint8 array of zeros and ones for any bit-like value"""
    if isinstance(value, BitSeries):
        return value.bits
    if isinstance(value, str):
        array = np.frombuffer(value.encode('ascii'), dtype=np.uint8) - 48
    else:
        array = np.asarray(value)
        if array.dtype == np.bool_:
            array = array.astype(np.uint8)
    if array.ndim != 1:
        raise errors.InvalidInput('Bit series must be one-dimensional')
    if array.size and (array.min() < 0 or array.max() > 1):
        raise errors.InvalidInput('Bit series elements must be 0 or 1')
    return array.astype(np.uint8, copy=False)


@dataclasses.dataclass(frozen=True, eq=False)
class BitSeries:
    """A binary series and where it came from"""
    bits: np.ndarray
    provenance: Provenance = UNKNOWN_PROVENANCE

    def __post_init__(self):
        bits = np.array(as_bits(self.bits), dtype=np.uint8, copy=True)
        kind = self.provenance.kind
        if kind == Kind.TD and self.provenance.threshold_ps is None:
            raise errors.InvalidMetadata('TD series require a threshold')
        if kind == Kind.OUT and self.provenance.threshold_ps is not None:
            raise errors.InvalidMetadata('OUT series carry no threshold')
        object.__setattr__(self, 'bits', _frozen(bits))

    @classmethod
    def from_string(cls, value: str,
                    provenance: Provenance = UNKNOWN_PROVENANCE) -> BitSeries:
        return cls(as_bits(value), provenance)

    def __len__(self) -> int:
        return int(self.bits.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitSeries):
            return NotImplemented
        return (self.provenance == other.provenance
                and np.array_equal(self.bits, other.bits))

    @property
    def ones(self) -> int:
        return int(np.count_nonzero(self.bits))

    def packed(self) -> bytes:
        return np.packbits(self.bits).tobytes()

    def __str__(self) -> str:
        return (self.bits + 48).tobytes().decode('ascii')


@dataclasses.dataclass(frozen=True, eq=False)
class TimeDiffSeries:
    """Elapsed picoseconds between consecutive detections"""
    diffs: np.ndarray
    provenance: Provenance
    start_ps: int = 0

    def __post_init__(self):
        diffs = np.array(self.diffs, dtype=np.int64, copy=True)
        if diffs.ndim != 1:
            raise errors.InvalidInput('Time differences must be 1-d')
        if diffs.size and diffs.min() < 0:
            raise errors.InvalidInput('Time differences must be positive')
        object.__setattr__(self, 'diffs', _frozen(diffs))

    def __len__(self) -> int:
        return int(self.diffs.size)

    @property
    def times(self) -> np.ndarray:
        """Absolute detection times reconstructed from the differences"""
        return self.start_ps + np.concatenate(
            ([0], np.cumsum(self.diffs, dtype=np.int64)))


@dataclasses.dataclass(frozen=True, eq=False)
class CoincidenceSet:
    """One-to-one matched A/B detections, ordered by the A timestamp"""
    index_a: np.ndarray
    index_b: np.ndarray
    t_a: np.ndarray
    t_b: np.ndarray
    window: int
    delay: int

    def __len__(self) -> int:
        return int(self.index_a.size)

    @property
    def pairs(self) -> typing.List[typing.Tuple[int, int, int, int]]:
        return list(zip(self.index_a.tolist(), self.index_b.tolist(),
                        self.t_a.tolist(), self.t_b.tolist()))
