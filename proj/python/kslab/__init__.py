"""Grid-measure filtering dynamics and the backward Kolmogorov equation on P(K)."""

from ._core import *  # noqa: F401,F403
