from ._hydroctrl import *  # noqa: F401,F403
