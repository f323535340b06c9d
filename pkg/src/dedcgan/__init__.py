"""Microwave hand-gesture recognition with a deformable deep convolutional GAN."""

__version__ = "0.1.0"
