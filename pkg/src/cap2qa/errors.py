"""Exception types shared across the package.

Errors are split into two broad families: input problems (bad files, bad
schemas, bad arguments) and runtime failures (backends, I/O). The CLI maps
the former to exit code 1 and the latter to exit code 2.
"""


class Cap2qaError(Exception):
    """Base class for all package errors."""


# --- input / validation problems ---------------------------------------------


class MissingFileError(Cap2qaError):
    pass


class MalformedJsonError(Cap2qaError):
    def __init__(self, path, offset, message="malformed JSON"):
        super().__init__(f"{path}: {message} at offset {offset}")
        self.path = str(path)
        self.offset = offset


class SchemaViolationError(Cap2qaError):
    pass


class MalformedLineError(Cap2qaError):
    def __init__(self, path, line_no, message="malformed line"):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class UnknownCategoryIdError(Cap2qaError):
    pass


class UnknownCategoryError(Cap2qaError):
    pass


class DuplicateSurfaceFormError(Cap2qaError):
    pass


class MissingAnnotationError(Cap2qaError):
    def __init__(self, image_id):
        super().__init__(f"no object annotation for image_id {image_id}")
        self.image_id = image_id


class DuplicateQuestionIdError(Cap2qaError):
    pass


class EmptyCaptionError(Cap2qaError):
    pass


class EmptyCorpusError(Cap2qaError):
    pass


# --- runtime failures ---------------------------------------------------------


class IoFailureError(Cap2qaError):
    pass


class BackendUnavailableError(Cap2qaError):
    pass


class AuthFailureError(Cap2qaError):
    pass


class ScriptExhaustedError(Cap2qaError):
    pass


class ResponseEmptyError(Cap2qaError):
    pass


VALIDATION_ERRORS = (
    MissingFileError,
    MalformedJsonError,
    SchemaViolationError,
    MalformedLineError,
    UnknownCategoryIdError,
    UnknownCategoryError,
    DuplicateSurfaceFormError,
    MissingAnnotationError,
    DuplicateQuestionIdError,
    EmptyCaptionError,
    EmptyCorpusError,
    ValueError,
)

RUNTIME_ERRORS = (
    IoFailureError,
    BackendUnavailableError,
    AuthFailureError,
    ScriptExhaustedError,
    ResponseEmptyError,
    OSError,
)
