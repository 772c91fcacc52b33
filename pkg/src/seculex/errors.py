"""Exception taxonomy shared across the package.

Three broad families matter to callers:

* ``InputError`` -- the caller handed us something malformed (bad graph,
  bad scenario file, bad program).  Maps to HTTP 400 / exit code 2.
* ``DomainError`` -- the input is well formed but the request cannot be
  satisfied (infeasible guarantees, insecure starting limits, closed
  book).  Maps to HTTP 409 / exit code 3.
* ``InternalError`` -- an invariant the code promises was falsified.
  Maps to HTTP 500 / exit code 4.
"""


class SeculexError(Exception):
    """Base class for all package errors."""


class InputError(SeculexError):
    """Malformed or inconsistent input supplied by the caller."""


class DomainError(SeculexError):
    """Well-formed request that cannot be satisfied."""


class InternalError(SeculexError):
    """A promised invariant failed; indicates a bug, not bad input."""
