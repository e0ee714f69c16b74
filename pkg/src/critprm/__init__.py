"""Critical probabilistic roadmaps: learned hub sampling for narrow passages."""

__version__ = "0.1.0"
