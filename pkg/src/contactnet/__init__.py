"""Joint human-object interaction detection and body-part contact
segmentation, trained and evaluated end to end on synthetic scenes."""

__version__ = "0.1.0"
