"""Monte Carlo laboratory for Liouville quantum gravity surfaces, SLE curves and their laws."""

__version__ = "0.1.0"
MANIFEST_FORMAT = "lqglab-manifest/1"

__all__ = ["__version__", "MANIFEST_FORMAT"]
