"""False-vacuum decay and resonant bubble nucleation on a Rydberg ring."""

__version__ = "0.1.0"
