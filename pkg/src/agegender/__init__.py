"""Multi-task age and gender prediction from speech: a small transformer
encoder with regression and classification heads, dataset curation, and
evaluation metrics."""

__version__ = "0.1.0"
