"""Exception hierarchy shared by all segpref modules."""


class SegprefError(Exception):
    """Base class for every error raised by segpref."""


class UnsupportedFormat(SegprefError):
    pass


class CorruptFile(SegprefError):
    pass


class SchemaError(SegprefError, ValueError):
    pass


class EmptyClip(SegprefError, ValueError):
    pass


class DimensionMismatch(SegprefError, ValueError):
    pass


class NonPositiveChunk(SegprefError, ValueError):
    pass


class OutOfRange(SegprefError, ValueError):
    pass


class EmptyDataset(SegprefError, ValueError):
    pass


class EmptyTrace(SegprefError, ValueError):
    pass


class EmptyReference(SegprefError, ValueError):
    pass


class TranslatorFailure(SegprefError):
    """The translator backend failed, timed out or returned garbage."""


class ProtocolError(TranslatorFailure):
    """The adapter answered, but out of order or with a wrong id."""
