"""Label-guided prototypical networks for multi-label few-shot aspect category detection."""

__version__ = "0.1.0"
