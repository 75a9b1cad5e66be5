from ._mcpep import *  # noqa: F401,F403
from ._mcpep import __doc__  # noqa: F401
