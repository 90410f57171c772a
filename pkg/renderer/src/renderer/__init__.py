"""Toy-scale conditional video GAN: conditioning-image sequences in, frames out."""

__version__ = "0.1.0"
