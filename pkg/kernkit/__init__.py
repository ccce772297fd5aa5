"""kernkit: learning and evaluating letter spacing."""

__version__ = "1.0.0"
