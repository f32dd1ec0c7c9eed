"""Quanvolutional and convolutional classifiers for small audio datasets."""
__version__ = "0.1.0"
