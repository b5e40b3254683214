"""Real-world (benchmark approach) pricing of long-dated contracts."""

__version__ = "0.1.0"
