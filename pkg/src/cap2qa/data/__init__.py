"""Bundled data files: the default object vocabulary and its synonyms."""
