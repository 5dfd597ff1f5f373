"""Active learning for regression: randomized BSS importance sampling over an unlabeled pool."""

from active_regression.config import TOOL_VERSION

__version__ = TOOL_VERSION
