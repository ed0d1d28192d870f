"""Filter / split / dehydrate stream processing, with a geo-matching pipeline."""
__version__ = "0.1.0"
