"""Nicer library errors.

Every failure raised by :mod:`bellrand` is an :class:`ApplicationError`
that carries a problem-details style ``document`` with a customizable
``type`` URL, so that per-series failures can be recorded in reports
instead of aborting a whole campaign.

"""
import typing

import yarl

ERROR_URL = yarl.URL('https://bellrand.readthedocs.io/en/latest/errors.html')


def set_error_url(url: str) -> None:
    """Call this to override the ``type`` URL in error documents."""
    global ERROR_URL
    ERROR_URL = yarl.URL(url)


class ApplicationError(Exception):
    """Generic error with some niceties added.

    The ``log_message`` parameter is required so that there is always
    something readable to log.  There is additional code to handle
    incongruent log format and args so that we avoid *most* log format
    failure exceptions.

    The ``type`` property of :attr:`document` is set to the current
    ``ERROR_URL`` with the class ``fragment`` appended.  The ``detail``
    property is set to the formatted log message.

    """
    fragment: typing.ClassVar[str] = 'application-error'
    title: typing.ClassVar[str] = 'Application Error'

    document: typing.Dict[str, typing.Any]
    log_message: str

    def __init__(self, log_message: str, *log_args, **kwargs):
        # avoid formatting failures when args are supplied without
        # placeholders or vice-versa
        log_args = () if '%' not in log_message else log_args
        super().__init__(*log_args)
        self.log_message = log_message
        try:
            detail = log_message % log_args if log_args else log_message
        except (TypeError, ValueError):
            detail = log_message
        self.document = {
            'type': kwargs.get(
                'type', str(ERROR_URL.with_fragment(self.fragment))),
            'title': kwargs.get('title', self.title),
            'detail': detail,
        }

    def __str__(self) -> str:
        return self.document['detail']


class InvalidInput(ApplicationError, ValueError):
    fragment = 'invalid-input'
    title = 'Invalid Input'


class MalformedRecord(InvalidInput):
    fragment = 'malformed-record'
    title = 'Malformed Record'


class NonMonotonic(InvalidInput):
    fragment = 'non-monotonic'
    title = 'Timestamps Decrease'


class InvalidMetadata(InvalidInput):
    fragment = 'invalid-metadata'
    title = 'Invalid Run Metadata'


class InvalidConfig(InvalidInput):
    fragment = 'invalid-config'
    title = 'Invalid Configuration'


class EmptyCounts(InvalidInput):
    fragment = 'empty-counts'
    title = 'Empty Coincidence Counts'


class EmptyScan(InvalidInput):
    fragment = 'empty-scan'
    title = 'Empty Delay Scan'


class EmptyInput(InvalidInput):
    fragment = 'empty-input'
    title = 'Empty Input'


class EmptySeries(InvalidInput):
    fragment = 'empty-series'
    title = 'Empty Series'


class InconsistentInputs(InvalidInput):
    fragment = 'inconsistent-inputs'
    title = 'Inconsistent Inputs'


class TooShort(InvalidInput):
    fragment = 'too-short'
    title = 'Series Too Short'


class Degenerate(InvalidInput):
    fragment = 'degenerate'
    title = 'Degenerate Series'


class DegenerateVariance(Degenerate):
    fragment = 'degenerate-variance'
    title = 'Zero Variance'


class BadBlockLen(InvalidInput):
    fragment = 'bad-block-length'
    title = 'Bad Block Length'


class BadTemplateSet(InvalidInput):
    fragment = 'bad-template-set'
    title = 'Bad Template Set'


class BadM(InvalidInput):
    fragment = 'bad-m'
    title = 'Bad Pattern Length'


class OutOfRange(InvalidInput):
    fragment = 'out-of-range'
    title = 'Value Out Of Range'


class UnsupportedAlpha(InvalidInput):
    fragment = 'unsupported-alpha'
    title = 'Unsupported Significance Level'


class InsufficientBits(InvalidInput):
    fragment = 'insufficient-bits'
    title = 'Insufficient Raw Bits'


class LengthMismatch(InvalidInput):
    fragment = 'length-mismatch'
    title = 'Length Mismatch'


class InsufficientHistory(InvalidInput):
    fragment = 'insufficient-history'
    title = 'Insufficient History'


class SingularRegression(ApplicationError):
    fragment = 'singular-regression'
    title = 'Singular Regression'


class NoLinearRegion(ApplicationError):
    fragment = 'no-linear-region'
    title = 'No Linear Region'


class NoPrediction(ApplicationError):
    fragment = 'no-prediction'
    title = 'No Prediction Possible'
