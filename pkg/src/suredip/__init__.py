"""Single-shot image reconstruction with untrained networks and the projected GSURE loss."""

__version__ = "0.1.0"
