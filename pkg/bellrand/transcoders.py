"""
Deterministic JSON encoding for reports, sidecars and metadata blocks

"""
import dataclasses
import enum
import json
import math
import pathlib
import typing

import numpy as np
import pydantic


class NumpyMixin:
    """Teach :meth:`dump_object` about numpy values"""

    def dump_object(self, obj):
        if isinstance(obj, np.bool_):
            return bool(obj)
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return _finite(float(obj))
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        return super().dump_object(obj)


class ModelMixin:
    """Teach :meth:`dump_object` about enums, dataclasses and models"""

    def dump_object(self, obj):
        if isinstance(obj, enum.Enum):
            return obj.value
        if isinstance(obj, pydantic.BaseModel):
            return obj.dict()
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            if hasattr(obj, 'as_dict'):
                return obj.as_dict()
            return {f.name: getattr(obj, f.name)
                    for f in dataclasses.fields(obj)}
        if isinstance(obj, pathlib.PurePath):
            return str(obj)
        return super().dump_object(obj)


class _BaseTranscoder:

    def dump_object(self, obj):
        raise TypeError(
            f'Object of type {obj.__class__.__name__} is not JSON '
            'serializable')


class JSONTranscoder(NumpyMixin, ModelMixin, _BaseTranscoder):
    """Sorted-key JSON that is byte-identical for identical values"""

    def __init__(self, indent: typing.Optional[int] = None):
        self.dump_options = {
            'allow_nan': False,
            'default': self.dump_object,
            'indent': indent,
            'separators': (',', ':') if indent is None else (',', ': '),
            'sort_keys': True,
        }

    def dump_object(self, obj):
        return _scrub(super().dump_object(obj))

    def dumps(self, value) -> str:
        return json.dumps(_scrub(value), **self.dump_options)

    @staticmethod
    def loads(value: typing.Union[bytes, str]):
        return json.loads(value)


def _finite(value: float) -> typing.Optional[float]:
    return value if math.isfinite(value) else None


def _scrub(value):
    """Replace non-finite floats, which JSON cannot carry, with null"""
    if isinstance(value, float):
        return _finite(value)
    if isinstance(value, dict):
        return {k: _scrub(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_scrub(v) for v in value]
    return value


_compact = JSONTranscoder()
_pretty = JSONTranscoder(indent=2)


def dumps(value, pretty: bool = False) -> str:
    return (_pretty if pretty else _compact).dumps(value)


def loads(value: typing.Union[bytes, str]):
    return JSONTranscoder.loads(value)
