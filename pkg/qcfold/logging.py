"""
Logging relies on the Logbook_ library. Library modules only create loggers;
the command line binds a single handler application-wide for the duration of
a command.

.. _logbook: https://logbook.readthedocs.io/

.. code-block:: python
   :caption: Example

   from qcfold import logging

   handler = logging.handler(logging.LogLevel.INFO)

   with handler.applicationbound():
       logging.getLogger("qcfold.demo").info("hello")
"""

from enum import Enum, auto
from logbook import Handler, NullHandler, StreamHandler
import logbook
import sys

from typing import Optional, TextIO


class LogLevel(Enum):
    """
    Verbosity of a qcfold command.
    """

    NONE = auto()  #: Logging is disabled
    DEBUG = auto()
    INFO = auto()
    NOTICE = auto()
    WARNING = auto()
    ERROR = auto()
    CRITICAL = auto()

    def to_logbook(self) -> int:
        """
        Convert this enum to a Logbook log level.

        :returns: Logbook log level
        """

        return logbook.lookup_level(self.name)


def getLogger(name: str) -> logbook.Logger:
    """
    Get a logger by name.

    :param name: Name of the logger
    :returns: Logbook Logger instance
    """

    return logbook.Logger(name)


def handler(
    loglevel: LogLevel,
    logformat: Optional[str] = None,
    stream: TextIO = sys.stderr,
) -> Handler:
    """
    Build the handler a command binds around its work.

    :param loglevel: Minimum level to emit, `LogLevel.NONE` silences everything
    :param logformat: Optional Logbook format string
    :param stream: Destination of the log records
    :returns: A Logbook handler, not yet bound
    """

    match loglevel:
        case LogLevel.NONE:
            result = NullHandler()

        case _:
            result = StreamHandler(stream, level=loglevel.to_logbook())

    if logformat is not None:
        result.format_string = logformat

    return result
