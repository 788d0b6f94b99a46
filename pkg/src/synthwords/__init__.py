"""Synthetic letter-reversal word scenes, a classical baseline detector, and
detection scoring (P/R/F1, mAP@0.5, mAP@0.5:0.95)."""

from synthwords.core import CLASS_NAMES, LetterClass, PixelBox

__version__ = "0.1.0"

__all__ = ["CLASS_NAMES", "LetterClass", "PixelBox", "__version__"]
