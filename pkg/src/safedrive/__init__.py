"""Post-perception driving safety stack with a deterministic desk-scale simulator."""

__version__ = "0.1.0"
