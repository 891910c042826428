"""Interactive image matting toolkit: corpus synthesis, guidance simulation,
a dual-decoder matting network, evaluation metrics, and an HTTP service."""

__version__ = "0.1.0"
