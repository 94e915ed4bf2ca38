"""
Time-tag file codec

Two interchangeable encodings of an :class:`~bellrand.models.EventStream`:

* CSV: an optional ``#meta <json>`` line, the ``timestamp_ps,channel``
  header, then one ``<uint64>,<A0|A1|B0|B1>`` row per detection.
* Binary: ``BTG1``, a little-endian uint64 record count, packed
  ``(uint64 timestamp_ps, uint8 channel)`` records and a trailing
  uint32 length-prefixed UTF-8 JSON metadata block.

"""
import enum
import json
import logging
import typing

import numpy as np

from bellrand import errors, models, transcoders

LOGGER = logging.getLogger(__name__)

CSV_HEADER = 'timestamp_ps,channel'
META_PREFIX = '#meta '
MAGIC = b'BTG1'
RECORD = np.dtype([('timestamp', '<u8'), ('channel', 'u1')])
_INT64_MAX = np.iinfo(np.int64).max
_CHANNELS = {channel.name: channel.value for channel in models.Channel}


class Format(str, enum.Enum):
    CSV = 'csv'
    BINARY = 'binary'


def parse_timetag(data: bytes) -> models.EventStream:
    """Parse a CSV or binary time-tag file, detecting the format from the
    leading magic bytes.

    :raises: :exc:`~bellrand.errors.MalformedRecord`,
        :exc:`~bellrand.errors.NonMonotonic`,
        :exc:`~bellrand.errors.InvalidMetadata`

    """
    if data.startswith(MAGIC):
        stream = _parse_binary(data)
    else:
        stream = _parse_csv(data)
    LOGGER.debug('Parsed %i events', len(stream))
    return stream


def write_timetag(stream: models.EventStream,
                  fmt: typing.Union[Format, str] = Format.CSV) -> bytes:
    """Encode a stream so that :func:`parse_timetag` returns an equal one"""
    if Format(fmt) == Format.BINARY:
        return _write_binary(stream)
    return _write_csv(stream)


def station_split(stream: models.EventStream, station: models.Station) \
        -> typing.List[typing.Tuple[int, int]]:
    """Return ``(timestamp, gate_bit)`` for one station's events in order"""
    events = station_events(stream, station)
    return list(zip(events.timestamps.tolist(), events.gates.tolist()))


def station_events(stream: models.EventStream,
                   station: models.Station) -> models.StationEvents:
    """Array form of :func:`station_split` that keeps stream positions"""
    station = models.Station(station)
    if station == models.Station.A:
        mask = stream.channels < models.Channel.B0
    elif station == models.Station.B:
        mask = stream.channels >= models.Channel.B0
    else:
        raise errors.InvalidInput('Station must be A or B, not %s',
                                  station.value)
    indices = np.flatnonzero(mask)
    return models.StationEvents(
        station, stream.timestamps[indices],
        (stream.channels[indices] & 1).astype(np.uint8), indices)


def merge_streams(streams: typing.Sequence[models.EventStream]) \
        -> models.EventStream:
    """Merge separately recorded files of the same run into one stream.

    Events with equal timestamps keep the order of ``streams``.

    """
    if not streams:
        return models.EventStream(np.empty(0, np.int64),
                                  np.empty(0, np.uint8))
    meta = streams[0].meta
    if any(stream.meta != meta for stream in streams[1:]):
        raise errors.InconsistentInputs(
            'Cannot merge streams with different run metadata')
    timestamps = np.concatenate([s.timestamps for s in streams])
    channels = np.concatenate([s.channels for s in streams])
    order = np.argsort(timestamps, kind='stable')
    return models.EventStream(timestamps[order], channels[order], meta)


def _parse_meta(value: typing.Union[bytes, str]) -> models.RunMetadata:
    try:
        document = json.loads(value)
    except (UnicodeDecodeError, ValueError) as error:
        raise errors.InvalidMetadata('Metadata is not valid JSON: %s', error)
    if not isinstance(document, dict):
        raise errors.InvalidMetadata('Metadata is not a JSON object')
    return models.RunMetadata.build(**document)


def _parse_csv(data: bytes) -> models.EventStream:
    try:
        text = data.decode('utf-8')
    except UnicodeDecodeError as error:
        raise errors.MalformedRecord('File is not UTF-8: %s', error)
    lines = text.split('\n')
    if lines and lines[-1] == '':
        lines.pop()
    meta = models.RunMetadata()
    offset = 0
    if lines and lines[0].startswith(META_PREFIX):
        meta = _parse_meta(lines[0][len(META_PREFIX):])
        offset = 1
    if len(lines) <= offset:
        return models.EventStream(np.empty(0, np.int64),
                                  np.empty(0, np.uint8), meta)
    if lines[offset].rstrip('\r') != CSV_HEADER:
        raise errors.MalformedRecord(
            'Line %i: expected header %r', offset + 1, CSV_HEADER)

    rows = lines[offset + 1:]
    timestamps = np.empty(len(rows), dtype=np.int64)
    channels = np.empty(len(rows), dtype=np.uint8)
    for index, row in enumerate(rows):
        line_number = index + offset + 2
        timestamp, _, channel = row.rstrip('\r').partition(',')
        if not timestamp.isdigit() or not timestamp.isascii():
            raise errors.MalformedRecord(
                'Line %i: bad timestamp %r', line_number, timestamp)
        value = int(timestamp)
        if value > _INT64_MAX:
            raise errors.MalformedRecord(
                'Line %i: timestamp %i out of range', line_number, value)
        try:
            channels[index] = _CHANNELS[channel]
        except KeyError:
            raise errors.MalformedRecord(
                'Line %i: bad channel %r', line_number, channel)
        timestamps[index] = value
    return models.EventStream(timestamps, channels, meta)


def _write_csv(stream: models.EventStream) -> bytes:
    lines = []
    if stream.meta != models.RunMetadata():
        lines.append(META_PREFIX + transcoders.dumps(stream.meta))
    lines.append(CSV_HEADER)
    names = np.array([channel.name for channel in models.Channel])
    lines.extend(
        f'{timestamp},{name}' for timestamp, name in zip(
            stream.timestamps.tolist(), names[stream.channels].tolist()))
    return ('\n'.join(lines) + '\n').encode('utf-8')


def _parse_binary(data: bytes) -> models.EventStream:
    header = len(MAGIC) + 8
    if len(data) < header:
        raise errors.MalformedRecord('Truncated binary header')
    count = int(np.frombuffer(data, '<u8', 1, len(MAGIC))[0])
    end = header + count * RECORD.itemsize
    if len(data) < end + 4:
        raise errors.MalformedRecord(
            'Truncated binary file: %i records declared', count)
    records = np.frombuffer(data, RECORD, count, header)
    if count and records['timestamp'].max() > _INT64_MAX:
        raise errors.MalformedRecord('Timestamp out of range')
    if count and records['channel'].max() > models.Channel.B1:
        bad = int(np.flatnonzero(records['channel'] > 3)[0])
        raise errors.MalformedRecord(
            'Record %i: bad channel code %i', bad,
            records['channel'][bad])
    length = int(np.frombuffer(data, '<u4', 1, end)[0])
    if len(data) != end + 4 + length:
        raise errors.MalformedRecord('Metadata block length mismatch')
    meta = _parse_meta(data[end + 4:]) if length else models.RunMetadata()
    return models.EventStream(records['timestamp'].astype(np.int64),
                              records['channel'], meta)


def _write_binary(stream: models.EventStream) -> bytes:
    records = np.empty(len(stream), dtype=RECORD)
    records['timestamp'] = stream.timestamps
    records['channel'] = stream.channels
    meta = transcoders.dumps(stream.meta).encode('utf-8')
    return b''.join((
        MAGIC, np.array([len(stream)], '<u8').tobytes(), records.tobytes(),
        np.array([len(meta)], '<u4').tobytes(), meta))

