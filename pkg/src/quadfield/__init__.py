"""quadfield: field-guided curved quadrilateral block decomposition of 2D domains."""

__version__ = "0.1.0"

from .geometry import DomainSpec, load_domain, load_fixture  # noqa: F401
