"""Design-based estimation for link-tracing network samples."""

__version__ = "0.1.0"
