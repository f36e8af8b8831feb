from ._dsfc import *  # noqa: F401,F403
from ._dsfc import __version__  # noqa: F401
