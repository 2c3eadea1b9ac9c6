"""Exception types shared across the package.

DataError covers malformed inputs (exit code 2 in the CLI), DependencyError
covers running a pipeline stage before its prerequisites (exit code 3).
"""


class NewscapError(Exception):
    pass


class DataError(NewscapError):
    pass


class DependencyError(NewscapError):
    pass
