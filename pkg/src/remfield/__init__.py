"""remfield - Random Energy Model in a random magnetic field."""

__version__ = "0.1.0"
