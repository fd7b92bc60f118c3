"""Moment-based estimation of affine term-structure models with noisy yields."""

from __future__ import annotations

__version__ = "0.1.0"
