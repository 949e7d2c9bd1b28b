"""Encode image datasets and noun corpora with a frozen vision-language
backbone and emit the binary artifacts the clustering pipeline consumes."""

__version__ = "0.1.0"
