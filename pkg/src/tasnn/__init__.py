"""Task-aware meta-learning Siamese network for few-shot classification of
obfuscated malware variants, with its synthetic corpus and feature pipeline."""

__version__ = "0.1.0"
