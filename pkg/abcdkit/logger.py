"""abcdkit logging module.

The level comes from ``$ABCD_LOGLEVEL`` (or the generic ``$LOGLEVEL``); ``--loglevel``
overrides it at runtime.
"""

import logging
import os

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"
LOGLEVEL = (os.environ.get("ABCD_LOGLEVEL") or os.environ.get("LOGLEVEL", "WARNING")).upper()

logging.basicConfig(level=LOGLEVEL, format=LOG_FORMAT)
logger = logging.getLogger("abcdkit")
