"""
In-process counters and timings for pipeline runs, summarized in the log
when a command completes.

"""
import collections
import contextlib
import logging
import time
import typing

LOGGER = logging.getLogger(__name__)


class Stats:
    """Counts and times metrics, series and commands during one run"""

    def __init__(self):
        self._counters: typing.Dict[str, int] = collections.Counter()
        self._durations: typing.Dict[str, typing.List[float]] = \
            collections.defaultdict(list)

    def incr(self, tags: dict, value: int = 1) -> None:
        """Add ``value`` to the counter identified by ``tags``"""
        self._counters[self._compose_key(tags)] += value

    def add_duration(self, tags: dict, value: float) -> None:
        """Record one elapsed time in seconds under ``tags``"""
        self._durations[self._compose_key(tags)].append(value)

    @contextlib.contextmanager
    def track_duration(self, tags: dict) -> typing.Iterator[None]:
        """Time the wrapped block and record it under ``tags``, even when
        the block raises.

        """
        start_time = time.monotonic()
        try:
            yield
        finally:
            self.add_duration(tags, time.monotonic() - start_time)

    def counters(self, flush: bool = False) -> typing.Dict[str, int]:
        """Snapshot of the counters, optionally resetting them"""
        snapshot = dict(self._counters)
        if flush:
            self._counters.clear()
        return snapshot

    def durations(self, flush: bool = False) \
            -> typing.Dict[str, typing.List[float]]:
        """Snapshot of the recorded times, each list sorted ascending

        :param flush: reset the recorded times after the snapshot

        """
        snapshot = {k: sorted(v) for k, v in self._durations.items()}
        if flush:
            self._durations.clear()
        return snapshot

    def log_summary(self) -> None:
        for key, value in sorted(self.counters().items()):
            LOGGER.info('%s = %i', key, value)
        for key, values in sorted(self.durations().items()):
            LOGGER.info('%s: %i calls, %.3fs total, %.3fs max', key,
                        len(values), sum(values), values[-1])

    @staticmethod
    def _compose_key(tags: dict) -> str:
        """``name=value`` pairs joined by ``:`` in sorted order"""
        return ':'.join(sorted(f'{k}={v}' for k, v in tags.items()))
