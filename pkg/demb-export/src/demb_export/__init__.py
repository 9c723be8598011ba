"""Encode documents, images and queries with a dual encoder and write DEMB
embedding stores for the retrieval engine."""

__version__ = "0.1.0"
