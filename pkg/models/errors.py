# models/errors.py - Exception hierarchy shared by the library, CLI and API

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_PRECONDITION = 3


class ReferendumError(Exception):
    """Base class. Subclasses pin the CLI exit code and the JSON error kind."""

    exit_code = EXIT_PRECONDITION
    kind = 'error'
    http_status = 400

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self):
        payload = {'error': self.kind, 'message': self.message}
        payload.update(self.details)
        return payload


class DomainError(ReferendumError, ValueError):
    kind = 'domain_error'


class DataParseError(ReferendumError):
    exit_code = EXIT_VALIDATION
    kind = 'parse_error'


class InvariantViolation(ReferendumError):
    exit_code = EXIT_VALIDATION
    kind = 'invariant_violation'

    def __init__(self, message, row=None, identity=None, **details):
        super().__init__(message, row=row, identity=identity, **details)
        self.row = row
        self.identity = identity


class PreconditionError(ReferendumError):
    kind = 'precondition_failed'
    http_status = 422


class GroupingError(PreconditionError):
    kind = 'grouping_error'

    def __init__(self, message, label=None, **details):
        super().__init__(message, label=label, **details)
        self.label = label


class RenderError(ReferendumError):
    kind = 'render_error'
