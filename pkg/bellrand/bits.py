"""
Packed bit storage and word-parallel bit helpers

Series are stored as ``<name>.bits`` (``numpy.packbits`` big-endian bit
order, zero padded) next to a ``<name>.json`` sidecar that records the
exact length and provenance.  TD series may also keep their pre-threshold
time differences in ``<name>.npy``.

"""
import logging
import pathlib
import typing

import numpy as np

from bellrand import errors, models, transcoders

LOGGER = logging.getLogger(__name__)

SCHEMA = 1

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)


def popcount64(words: np.ndarray) -> np.ndarray:
    """SWAR population count of every uint64 in ``words``"""
    x = words.astype(np.uint64, copy=True)
    x -= (x >> np.uint64(1)) & _M1
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return (x * _H01) >> np.uint64(56)


def pack_words(bits: np.ndarray) -> np.ndarray:
    """Pack bits into uint64 words, bit ``i`` at position ``i % 64`` of
    word ``i // 64``.

    """
    bits = np.asarray(bits, dtype=np.uint8)
    padded = np.zeros(-(-bits.size // 64) * 64, dtype=np.uint8)
    padded[:bits.size] = bits
    return np.packbits(padded, bitorder='little').view('<u8').astype(
        np.uint64)


def _paths(path: typing.Union[str, pathlib.Path]) \
        -> typing.Tuple[pathlib.Path, pathlib.Path, pathlib.Path]:
    base = pathlib.Path(path)
    if base.suffix in ('.bits', '.json', '.npy'):
        base = base.with_suffix('')
    return (base.with_suffix('.bits'), base.with_suffix('.json'),
            base.with_suffix('.npy'))


def write_series(series: models.BitSeries,
                 path: typing.Union[str, pathlib.Path],
                 diffs: typing.Optional[models.TimeDiffSeries] = None) \
        -> pathlib.Path:
    """Write the packed bits, sidecar and optional time differences.

    :returns: the path of the ``.bits`` file

    """
    bits_path, sidecar_path, diffs_path = _paths(path)
    bits_path.parent.mkdir(parents=True, exist_ok=True)
    bits_path.write_bytes(series.packed())
    sidecar = {'schema': SCHEMA,
               'length': len(series),
               'provenance': series.provenance}
    if diffs is not None:
        np.save(diffs_path, diffs.diffs)
        sidecar['diffs'] = diffs_path.name
        sidecar['start_ps'] = diffs.start_ps
    sidecar_path.write_text(transcoders.dumps(sidecar, pretty=True) + '\n')
    LOGGER.debug('Wrote %i bits to %s', len(series), bits_path)
    return bits_path


def read_series(path: typing.Union[str, pathlib.Path]) -> models.BitSeries:
    """Read a series written by :func:`write_series`"""
    bits_path, sidecar_path, _ = _paths(path)
    sidecar = _read_sidecar(sidecar_path)
    try:
        packed = np.frombuffer(bits_path.read_bytes(), dtype=np.uint8)
    except OSError as error:
        raise errors.InvalidInput('Failed to read %s: %s', bits_path, error)
    length = sidecar['length']
    if packed.size != -(-length // 8):
        raise errors.LengthMismatch(
            '%s holds %i bytes, %i bits declared', bits_path, packed.size,
            length)
    return models.BitSeries(np.unpackbits(packed, count=length),
                            models.Provenance.from_dict(
                                sidecar['provenance']))


def read_diffs(path: typing.Union[str, pathlib.Path]) \
        -> typing.Optional[models.TimeDiffSeries]:
    """Return the time differences stored next to a TD series, if any"""
    _, sidecar_path, _ = _paths(path)
    sidecar = _read_sidecar(sidecar_path)
    if 'diffs' not in sidecar:
        return None
    provenance = models.Provenance.from_dict(
        {**sidecar['provenance'], 'threshold_ps': None})
    return models.TimeDiffSeries(
        np.load(sidecar_path.parent / sidecar['diffs']), provenance,
        sidecar.get('start_ps', 0))


def _read_sidecar(path: pathlib.Path) -> dict:
    try:
        sidecar = transcoders.loads(path.read_text())
    except OSError as error:
        raise errors.InvalidInput('Failed to read %s: %s', path, error)
    except ValueError as error:
        raise errors.InvalidMetadata('Invalid sidecar %s: %s', path, error)
    if not isinstance(sidecar, dict) or sidecar.get('schema') != SCHEMA:
        raise errors.InvalidMetadata('Unsupported sidecar %s', path)
    if not isinstance(sidecar.get('length'), int) \
            or 'provenance' not in sidecar:
        raise errors.InvalidMetadata('Incomplete sidecar %s', path)
    return sidecar
