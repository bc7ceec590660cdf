"""Cross-stitch bi-encoder for distantly supervised relation extraction."""

__version__ = "0.1.0"
